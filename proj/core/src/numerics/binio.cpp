#include "bevworld/numerics/binio.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

namespace bevworld::num {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big,
              "mixed endian platforms unsupported");

template <class T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    T out{};
    auto* src = reinterpret_cast<const unsigned char*>(&v);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (size_t i = 0; i < sizeof(T); ++i) dst[i] = src[sizeof(T) - 1 - i];
    return out;
  } else {
    return v;
  }
}

}  // namespace

BinWriter::BinWriter(const std::string& path) : out_(path, std::ios::binary), path_(path) {
  if (!out_) throw std::runtime_error("cannot open for writing: " + path);
}

BinWriter::~BinWriter() { close(); }

void BinWriter::close() {
  if (out_.is_open()) {
    out_.flush();
    if (!out_) throw std::runtime_error("write failure: " + path_);
    out_.close();
  }
}

void BinWriter::bytes(const void* data, size_t n) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out_) throw std::runtime_error("write failure at offset " + std::to_string(offset_) +
                                      ": " + path_);
  offset_ += n;
}

void BinWriter::u8(uint8_t v) { bytes(&v, 1); }
void BinWriter::u16(uint16_t v) { v = to_le(v); bytes(&v, 2); }
void BinWriter::u32(uint32_t v) { v = to_le(v); bytes(&v, 4); }
void BinWriter::u64(uint64_t v) { v = to_le(v); bytes(&v, 8); }

void BinWriter::f32(float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  u32(bits);
}

void BinWriter::f64(double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  u64(bits);
}

void BinWriter::str(const std::string& s) { bytes(s.data(), s.size()); }

void BinWriter::f64_array(const std::vector<double>& v) {
  for (double x : v) f64(x);
}

BinReader::BinReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw std::runtime_error("cannot open for reading: " + path);
}

void BinReader::bytes(void* data, size_t n) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in_.gcount()) != n) {
    throw std::runtime_error("truncated file at byte offset " + std::to_string(offset_) + ": " +
                             path_);
  }
  offset_ += n;
}

uint8_t BinReader::u8() {
  uint8_t v;
  bytes(&v, 1);
  return v;
}

uint16_t BinReader::u16() {
  uint16_t v;
  bytes(&v, 2);
  return to_le(v);
}

uint32_t BinReader::u32() {
  uint32_t v;
  bytes(&v, 4);
  return to_le(v);
}

uint64_t BinReader::u64() {
  uint64_t v;
  bytes(&v, 8);
  return to_le(v);
}

float BinReader::f32() {
  uint32_t bits = u32();
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

double BinReader::f64() {
  uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string BinReader::str(size_t n) {
  std::string s(n, '\0');
  bytes(s.data(), n);
  return s;
}

std::vector<double> BinReader::f64_array(size_t n) {
  std::vector<double> v(n);
  for (size_t i = 0; i < n; ++i) v[i] = f64();
  return v;
}

bool BinReader::at_eof() { return in_.peek() == std::ifstream::traits_type::eof(); }

}  // namespace bevworld::num
