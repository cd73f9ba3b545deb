#include "driverep/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace driverep {

namespace {

constexpr char kMagic[8] = {'D', 'R', 'V', 'R', 'E', 'P', '0', '1'};
constexpr char kEndMagic[8] = {'D', 'R', 'V', 'R', 'E', 'P', 'E', 'V'};
constexpr std::uint32_t kEndianTag = 0x01020304u;

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw CorruptFileError("checkpoint truncated while reading " + what);
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::ifstream& in, const std::string& what) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw CorruptFileError("checkpoint truncated while reading " + what);
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_checkpoint_file(
    const std::filesystem::path& path, const nlohmann::json& header, int dtype,
    const std::vector<std::pair<std::string, std::vector<double>>>& sections) {
  if (dtype != 1 && dtype != 2) throw ContractError("bad checkpoint dtype");
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(kMagic, 8);
  put_u32(out, kEndianTag);
  put_u32(out, static_cast<std::uint32_t>(dtype));
  const std::string hdr = header.dump();
  put_u64(out, hdr.size());
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  put_u64(out, sections.size());
  for (const auto& [name, values] : sections) {
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, values.size());
    if (dtype == 1) {
      std::vector<float> f(values.begin(), values.end());
      out.write(reinterpret_cast<const char*>(f.data()),
                static_cast<std::streamsize>(f.size() * sizeof(float)));
    } else {
      out.write(reinterpret_cast<const char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(double)));
    }
  }
  out.write(kEndMagic, 8);
  if (!out) throw IoError("write failed: " + path.string());
}

RawCheckpoint read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw CorruptFileError("not a checkpoint file: " + path.string());
  }
  if (get_u32(in, "endian tag") != kEndianTag) {
    throw CorruptFileError("checkpoint endianness mismatch: " + path.string());
  }
  RawCheckpoint ckpt;
  ckpt.dtype = static_cast<int>(get_u32(in, "dtype"));
  if (ckpt.dtype != 1 && ckpt.dtype != 2) {
    throw CorruptFileError("unknown checkpoint dtype: " + path.string());
  }
  const std::uint64_t hdr_len = get_u64(in, "header length");
  std::string hdr(hdr_len, '\0');
  if (!in.read(hdr.data(), static_cast<std::streamsize>(hdr_len))) {
    throw CorruptFileError("checkpoint truncated in header: " + path.string());
  }
  try {
    ckpt.header = nlohmann::json::parse(hdr);
  } catch (const nlohmann::json::exception&) {
    throw CorruptFileError("checkpoint header is not valid json: " +
                           path.string());
  }
  const std::uint64_t n_sections = get_u64(in, "section count");
  for (std::uint64_t s = 0; s < n_sections; ++s) {
    const std::uint64_t name_len = get_u64(in, "section name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name_len))) {
      throw CorruptFileError("checkpoint truncated in section name: " +
                             path.string());
    }
    const std::uint64_t count = get_u64(in, "section size");
    std::vector<double> values(count);
    if (ckpt.dtype == 1) {
      std::vector<float> f(count);
      if (!in.read(reinterpret_cast<char*>(f.data()),
                   static_cast<std::streamsize>(count * sizeof(float)))) {
        throw CorruptFileError("checkpoint truncated in section '" + name +
                               "': " + path.string());
      }
      for (std::uint64_t i = 0; i < count; ++i) values[i] = f[i];
    } else {
      if (!in.read(reinterpret_cast<char*>(values.data()),
                   static_cast<std::streamsize>(count * sizeof(double)))) {
        throw CorruptFileError("checkpoint truncated in section '" + name +
                               "': " + path.string());
      }
    }
    ckpt.sections.emplace_back(std::move(name), std::move(values));
  }
  char end_magic[8];
  if (!in.read(end_magic, 8) || std::memcmp(end_magic, kEndMagic, 8) != 0) {
    throw CorruptFileError("checkpoint missing end marker: " + path.string());
  }
  return ckpt;
}

}  // namespace driverep
