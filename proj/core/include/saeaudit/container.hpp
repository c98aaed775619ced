#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "saeaudit/matrix.hpp"

namespace saeaudit {

// Self-describing binary container shared by dataset, classifier and SAE
// checkpoints: 8 magic bytes, a kind tag, a format version, then payload.
// All integers and IEEE-754 doubles are written little-endian byte by
// byte, so files round-trip bit-exactly across platforms.

enum class ContainerKind : std::uint32_t {
  Dataset = 1,
  Classifier = 2,
  Sae = 3,
};

inline constexpr char kContainerMagic[8] = {'S', 'A', 'E', 'A', 'U', 'D', 'I', 'T'};
inline constexpr std::uint32_t kContainerVersion = 1;

class ContainerWriter {
 public:
  ContainerWriter(const std::filesystem::path& path, ContainerKind kind);

  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v);
  void f64(double v);
  void str(const std::string& s);
  void matrix(const Matrix& m);

  void close();

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class ContainerReader {
 public:
  ContainerReader(const std::filesystem::path& path, ContainerKind expected_kind);

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32();
  double f64();
  std::string str();
  Matrix matrix();

 private:
  void fill(char* dst, std::size_t n);

  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace saeaudit
