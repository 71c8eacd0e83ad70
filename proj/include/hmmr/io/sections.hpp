#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// Self-describing sectioned container used by every binary file in the
// project. Layout (all integers little-endian):
//
//   magic                 ASCII, no terminator (e.g. "HMMRMDL1")
//   repeated sections:
//     u32  name length
//     name bytes
//     u8   kind           0 = f64, 1 = i64, 2 = raw bytes
//     u64  element count
//     payload             count * 8 bytes (f64/i64) or count bytes
//   final section named "end" of kind bytes with count 0
//
// Section names are unique within a file.

namespace hmmr::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Whole-file helpers; both throw std::runtime_error naming the path.
std::string read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, std::string_view image);

enum class SectionKind : std::uint8_t { F64 = 0, I64 = 1, Bytes = 2 };

class SectionWriter {
 public:
  explicit SectionWriter(std::string_view magic);

  void f64(std::string_view name, std::span<const double> values);
  void i64(std::string_view name, std::span<const std::int64_t> values);
  void bytes(std::string_view name, std::string_view data);

  // Appends the end marker and returns the file image.
  std::string finish();
  void write_file(const std::filesystem::path& path);

 private:
  void header(std::string_view name, SectionKind kind, std::uint64_t count);
  std::string buf_;
  bool finished_ = false;
};

struct Section {
  std::string name;
  SectionKind kind = SectionKind::Bytes;
  std::uint64_t offset = 0;  // byte offset of the section header
  std::vector<double> f64;
  std::vector<std::int64_t> i64;
  std::string bytes;
};

class SectionReader {
 public:
  SectionReader(std::string image, std::string_view magic, std::string source = "<memory>");
  static SectionReader from_file(const std::filesystem::path& path, std::string_view magic);

  bool has(const std::string& name) const { return sections_.count(name) != 0; }
  const Section& require(const std::string& name, SectionKind kind) const;
  // f64 payload with an exact expected length.
  const std::vector<double>& f64(const std::string& name, std::size_t expected) const;
  const std::vector<double>& f64(const std::string& name) const;
  const std::vector<std::int64_t>& i64(const std::string& name) const;
  const std::string& bytes(const std::string& name) const;

  const std::string& source() const { return source_; }
  bool truncated() const { return truncated_; }

 private:
  std::string source_;
  std::map<std::string, Section> sections_;
  bool truncated_ = false;
  std::uint64_t truncated_at_ = 0;
};

}  // namespace hmmr::io
