// Copyright 2026 The TokenMoE Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tokmoe/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>
#include <system_error>

#include "tokmoe/error.hpp"

namespace tokmoe {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw IntegrityError("checkpoint truncated at byte " + std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ull;
  }
  return hash;
}

std::string serialize_checkpoint(const ParamStore& params) {
  std::string body;
  put_u64(body, params.size());
  for (const ParamSlot& slot : params) {
    put_u64(body, slot.name.size());
    body += slot.name;
    put_u64(body, slot.value.rank());
    for (std::size_t d : slot.value.shape()) put_u64(body, d);
    for (double v : slot.value.values()) put_u64(body, std::bit_cast<std::uint64_t>(v));
  }
  std::string out(kCheckpointMagic);
  out += body;
  put_u64(out, fnv1a64(body));
  return out;
}

ParamStore parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < kCheckpointMagic.size() + 16 ||
      bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw IntegrityError("not a checkpoint (bad magic)");
  }
  const std::string_view body =
      bytes.substr(kCheckpointMagic.size(),
                   bytes.size() - kCheckpointMagic.size() - 8);
  Reader tail(bytes.substr(bytes.size() - 8));
  const std::uint64_t stored = tail.u64();
  if (fnv1a64(body) != stored) {
    throw IntegrityError("checkpoint checksum mismatch");
  }

  Reader in(body);
  ParamStore params;
  const std::uint64_t count = in.u64();
  for (std::uint64_t t = 0; t < count; ++t) {
    const std::uint64_t name_len = in.u64();
    std::string name(in.take(name_len));
    if (params.find(name)) {
      throw IntegrityError("duplicate tensor name '" + name + "'");
    }
    const std::uint64_t rank = in.u64();
    if (rank == 0 || rank > 8) {
      throw IntegrityError("tensor '" + name + "' has invalid rank " +
                           std::to_string(rank));
    }
    Shape shape(rank);
    std::uint64_t elements = 1;
    for (auto& d : shape) {
      d = in.u64();
      if (d == 0) throw IntegrityError("tensor '" + name + "' has a zero dimension");
      elements *= d;
    }
    if (elements > in.remaining() / 8) {
      throw IntegrityError("tensor '" + name + "' payload truncated");
    }
    const SlotId id = params.add(name, shape);
    for (double& v : params.value(id).values()) v = std::bit_cast<double>(in.u64());
  }
  if (in.remaining() != 0) {
    throw IntegrityError("trailing bytes after the last tensor");
  }
  return params;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename onto '" + path.string() + "': " + ec.message());
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
  write_file_atomic(path, serialize_checkpoint(params));
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path));
}

}  // namespace tokmoe
