#include "saeaudit/container.hpp"

#include <bit>
#include <cstring>

#include "saeaudit/errors.hpp"

namespace saeaudit {

namespace {

void put_le(std::ofstream& out, std::uint64_t v, int bytes) {
  char buf[8];
  for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, bytes);
}

std::uint64_t get_le(const char* buf, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}

}  // namespace

ContainerWriter::ContainerWriter(const std::filesystem::path& path, ContainerKind kind)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!out_) throw IoError("cannot open for writing: " + path.string());
  out_.write(kContainerMagic, sizeof(kContainerMagic));
  u32(static_cast<std::uint32_t>(kind));
  u32(kContainerVersion);
}

void ContainerWriter::u8(std::uint8_t v) { put_le(out_, v, 1); }
void ContainerWriter::u32(std::uint32_t v) { put_le(out_, v, 4); }
void ContainerWriter::u64(std::uint64_t v) { put_le(out_, v, 8); }
void ContainerWriter::i32(std::int32_t v) { put_le(out_, static_cast<std::uint32_t>(v), 4); }
void ContainerWriter::f64(double v) { put_le(out_, std::bit_cast<std::uint64_t>(v), 8); }

void ContainerWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void ContainerWriter::matrix(const Matrix& m) {
  u64(m.rows());
  u64(m.cols());
  for (double v : m.data()) f64(v);
}

void ContainerWriter::close() {
  out_.flush();
  if (!out_) throw IoError("write failed: " + path_.string());
  out_.close();
}

ContainerReader::ContainerReader(const std::filesystem::path& path, ContainerKind expected_kind)
    : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw IoError("cannot open for reading: " + path.string());
  char magic[sizeof(kContainerMagic)];
  fill(magic, sizeof(magic));
  if (std::memcmp(magic, kContainerMagic, sizeof(magic)) != 0) {
    throw IoError("bad magic bytes: " + path.string());
  }
  const std::uint32_t kind = u32();
  if (kind != static_cast<std::uint32_t>(expected_kind)) {
    throw IoError("container kind " + std::to_string(kind) + " does not match expected " +
                  std::to_string(static_cast<std::uint32_t>(expected_kind)) + ": " +
                  path.string());
  }
  const std::uint32_t version = u32();
  if (version != kContainerVersion) {
    throw IoError("unsupported container version " + std::to_string(version) + ": " +
                  path.string());
  }
}

void ContainerReader::fill(char* dst, std::size_t n) {
  in_.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) {
    throw IoError("unexpected end of file: " + path_.string());
  }
}

std::uint8_t ContainerReader::u8() {
  char b[1];
  fill(b, 1);
  return static_cast<std::uint8_t>(get_le(b, 1));
}

std::uint32_t ContainerReader::u32() {
  char b[4];
  fill(b, 4);
  return static_cast<std::uint32_t>(get_le(b, 4));
}

std::uint64_t ContainerReader::u64() {
  char b[8];
  fill(b, 8);
  return get_le(b, 8);
}

std::int32_t ContainerReader::i32() { return static_cast<std::int32_t>(u32()); }

double ContainerReader::f64() { return std::bit_cast<double>(u64()); }

std::string ContainerReader::str() {
  const std::uint32_t n = u32();
  std::string s(n, '\0');
  if (n > 0) fill(s.data(), n);
  return s;
}

Matrix ContainerReader::matrix() {
  const std::uint64_t rows = u64();
  const std::uint64_t cols = u64();
  Matrix m(rows, cols);
  for (double& v : m.data()) v = f64();
  return m;
}

}  // namespace saeaudit
