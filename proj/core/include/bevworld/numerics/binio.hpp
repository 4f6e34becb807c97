#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace bevworld::num {

/// Little-endian binary writer over a file stream.
class BinWriter {
 public:
  explicit BinWriter(const std::string& path);
  ~BinWriter();

  void u8(uint8_t v);
  void u16(uint16_t v);
  void u32(uint32_t v);
  void u64(uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(const void* data, size_t n);
  void str(const std::string& s);  // raw bytes, no length prefix
  void f64_array(const std::vector<double>& v);

  uint64_t offset() const { return offset_; }
  void close();

 private:
  std::ofstream out_;
  std::string path_;
  uint64_t offset_ = 0;
};

/// Little-endian binary reader; throws std::runtime_error naming the byte
/// offset on truncation.
class BinReader {
 public:
  explicit BinReader(const std::string& path);

  uint8_t u8();
  uint16_t u16();
  uint32_t u32();
  uint64_t u64();
  float f32();
  double f64();
  void bytes(void* data, size_t n);
  std::string str(size_t n);
  std::vector<double> f64_array(size_t n);

  uint64_t offset() const { return offset_; }
  bool at_eof();

 private:
  std::ifstream in_;
  std::string path_;
  uint64_t offset_ = 0;
};

}  // namespace bevworld::num
