#include "hmmr/io/sections.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hmmr::io {
namespace {

template <typename T>
void put_le(std::string& buf, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  buf.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(const char* p) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

std::string kind_name(SectionKind k) {
  switch (k) {
    case SectionKind::F64: return "f64";
    case SectionKind::I64: return "i64";
    case SectionKind::Bytes: return "bytes";
  }
  return "?";
}

}  // namespace

SectionWriter::SectionWriter(std::string_view magic) { buf_.append(magic); }

void SectionWriter::header(std::string_view name, SectionKind kind, std::uint64_t count) {
  if (finished_) throw std::logic_error("SectionWriter: write after finish");
  put_le<std::uint32_t>(buf_, static_cast<std::uint32_t>(name.size()));
  buf_.append(name);
  put_le<std::uint8_t>(buf_, static_cast<std::uint8_t>(kind));
  put_le<std::uint64_t>(buf_, count);
}

void SectionWriter::f64(std::string_view name, std::span<const double> values) {
  header(name, SectionKind::F64, values.size());
  for (double v : values) put_le<double>(buf_, v);
}

void SectionWriter::i64(std::string_view name, std::span<const std::int64_t> values) {
  header(name, SectionKind::I64, values.size());
  for (auto v : values) put_le<std::int64_t>(buf_, v);
}

void SectionWriter::bytes(std::string_view name, std::string_view data) {
  header(name, SectionKind::Bytes, data.size());
  buf_.append(data);
}

std::string SectionWriter::finish() {
  if (!finished_) {
    header("end", SectionKind::Bytes, 0);
    finished_ = true;
  }
  return buf_;
}

std::string read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_image(const std::filesystem::path& path, std::string_view image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(image.data(), static_cast<std::streamsize>(image.size()));
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

void SectionWriter::write_file(const std::filesystem::path& path) { write_image(path, finish()); }

SectionReader::SectionReader(std::string image, std::string_view magic, std::string source)
    : source_(std::move(source)) {
  if (image.size() < magic.size() || std::string_view(image).substr(0, magic.size()) != magic) {
    throw FormatError(source_ + ": bad magic at offset 0, expected \"" + std::string(magic) + "\"");
  }
  std::uint64_t pos = magic.size();
  const std::uint64_t n = image.size();
  bool saw_end = false;
  while (pos < n) {
    const std::uint64_t start = pos;
    if (n - pos < 4) break;
    const auto name_len = get_le<std::uint32_t>(image.data() + pos);
    pos += 4;
    if (n - pos < name_len + 9ull) {
      pos = start;
      break;
    }
    Section s;
    s.offset = start;
    s.name.assign(image.data() + pos, name_len);
    pos += name_len;
    const auto kind = get_le<std::uint8_t>(image.data() + pos);
    pos += 1;
    if (kind > 2) {
      throw FormatError(source_ + ": section '" + s.name + "' at offset " + std::to_string(start) +
                        " has unknown kind " + std::to_string(kind));
    }
    s.kind = static_cast<SectionKind>(kind);
    const auto count = get_le<std::uint64_t>(image.data() + pos);
    pos += 8;
    const std::uint64_t width = s.kind == SectionKind::Bytes ? 1 : 8;
    if (count > (n - pos) / width) {
      truncated_ = true;
      truncated_at_ = start;
      throw FormatError(source_ + ": section '" + s.name + "' at offset " + std::to_string(start) +
                        " truncated: needs " + std::to_string(count * width) + " payload bytes, " +
                        std::to_string(n - pos) + " remain");
    }
    if (s.kind == SectionKind::F64) {
      s.f64.resize(count);
      for (std::uint64_t i = 0; i < count; ++i) s.f64[i] = get_le<double>(image.data() + pos + 8 * i);
    } else if (s.kind == SectionKind::I64) {
      s.i64.resize(count);
      for (std::uint64_t i = 0; i < count; ++i)
        s.i64[i] = get_le<std::int64_t>(image.data() + pos + 8 * i);
    } else {
      s.bytes.assign(image.data() + pos, count);
    }
    pos += count * width;
    if (s.name == "end") {
      saw_end = true;
      break;
    }
    if (sections_.count(s.name)) {
      throw FormatError(source_ + ": duplicate section '" + s.name + "' at offset " +
                        std::to_string(start));
    }
    sections_.emplace(s.name, std::move(s));
  }
  if (!saw_end) {
    truncated_ = true;
    truncated_at_ = pos;
  }
}

SectionReader SectionReader::from_file(const std::filesystem::path& path, std::string_view magic) {
  return SectionReader(read_image(path), magic, path.string());
}

const Section& SectionReader::require(const std::string& name, SectionKind kind) const {
  auto it = sections_.find(name);
  if (it == sections_.end()) {
    std::string msg = source_ + ": missing section '" + name + "'";
    if (truncated_) msg += " (file truncated at offset " + std::to_string(truncated_at_) + ")";
    throw FormatError(msg);
  }
  if (it->second.kind != kind) {
    throw FormatError(source_ + ": section '" + name + "' at offset " +
                      std::to_string(it->second.offset) + " has kind " +
                      kind_name(it->second.kind) + ", expected " + kind_name(kind));
  }
  return it->second;
}

const std::vector<double>& SectionReader::f64(const std::string& name, std::size_t expected) const {
  const Section& s = require(name, SectionKind::F64);
  if (s.f64.size() != expected) {
    throw FormatError(source_ + ": section '" + name + "' at offset " + std::to_string(s.offset) +
                      " has " + std::to_string(s.f64.size()) + " elements, expected " +
                      std::to_string(expected));
  }
  return s.f64;
}

const std::vector<double>& SectionReader::f64(const std::string& name) const {
  return require(name, SectionKind::F64).f64;
}

const std::vector<std::int64_t>& SectionReader::i64(const std::string& name) const {
  return require(name, SectionKind::I64).i64;
}

const std::string& SectionReader::bytes(const std::string& name) const {
  return require(name, SectionKind::Bytes).bytes;
}

}  // namespace hmmr::io
