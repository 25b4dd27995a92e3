#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "medmerge/tensor.hpp"

namespace mm {

// All on-disk formats are little-endian. The writers below emit raw host
// bytes; a big-endian host is rejected up front.
inline void check_little_endian() {
  uint32_t probe = 1;
  char c;
  std::memcpy(&c, &probe, 1);
  require(c == 1, "big-endian hosts are not supported by the file formats");
}

inline uint32_t crc32(const void* data, size_t n, uint32_t crc = 0) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc = ~crc;
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) crc = table[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
  return ~crc;
}

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
template <class T>
void write_pod(std::ostream& os, T v) {
  write_bytes(os, &v, sizeof(T));
}
inline void read_bytes(std::istream& is, void* p, size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  require(static_cast<size_t>(is.gcount()) == n,
          std::string("truncated file while reading ") + what);
}
template <class T>
T read_pod(std::istream& is, const char* what) {
  T v;
  read_bytes(is, &v, sizeof(T), what);
  return v;
}

/// Tensor-blob container shared by checkpoints, datasets, and activation
/// dumps. Layout:
///   magic[4] | u32 version | u64 meta_len | meta text
///   | u64 index_len | index text | u32 crc32(meta+index)
///   | u64 payload_len | payload
/// Index lines: "name dtype rank d0..dk offset nbytes"; offsets are relative
/// to the payload start, ascending and non-overlapping.
struct TensorBlob {
  std::string meta;  // format-specific key-value text
  ParamTree tensors;
};

inline void write_tensor_blob(std::ostream& os, const char magic[4], const TensorBlob& blob) {
  check_little_endian();
  std::ostringstream index;
  std::string payload;
  for (const auto& [name, t] : blob.tensors) {
    require(name.find(' ') == std::string::npos && name.find('\n') == std::string::npos,
            "tensor name must not contain whitespace: " + name);
    const void* src;
    size_t nbytes;
    std::visit(
        [&](const auto& tt) {
          src = tt.ptr();
          nbytes = tt.data.size() * sizeof(tt.data[0]);
        },
        t.v);
    index << name << " " << dtype_name(t.dtype()) << " " << t.shape().size();
    for (int64_t d : t.shape()) index << " " << d;
    index << " " << payload.size() << " " << nbytes << "\n";
    payload.append(static_cast<const char*>(src), nbytes);
  }
  std::string idx = index.str();
  uint32_t crc = crc32(blob.meta.data(), blob.meta.size());
  crc = crc32(idx.data(), idx.size(), crc);

  write_bytes(os, magic, 4);
  write_pod<uint32_t>(os, 1);
  write_pod<uint64_t>(os, blob.meta.size());
  write_bytes(os, blob.meta.data(), blob.meta.size());
  write_pod<uint64_t>(os, idx.size());
  write_bytes(os, idx.data(), idx.size());
  write_pod<uint32_t>(os, crc);
  write_pod<uint64_t>(os, payload.size());
  write_bytes(os, payload.data(), payload.size());
}

inline TensorBlob read_tensor_blob(std::istream& is, const char magic[4], const std::string& what) {
  check_little_endian();
  char m[4];
  read_bytes(is, m, 4, "magic");
  require(std::memcmp(m, magic, 4) == 0, what + ": bad magic (not a " + what + " file)");
  uint32_t version = read_pod<uint32_t>(is, "version");
  require(version == 1, what + ": unsupported format version " + std::to_string(version));

  TensorBlob blob;
  uint64_t meta_len = read_pod<uint64_t>(is, "meta length");
  require(meta_len < (1ull << 24), what + ": implausible meta length (corrupt header)");
  blob.meta.resize(meta_len);
  read_bytes(is, blob.meta.data(), meta_len, "meta");
  uint64_t index_len = read_pod<uint64_t>(is, "index length");
  require(index_len < (1ull << 28), what + ": implausible index length (corrupt header)");
  std::string idx(index_len, '\0');
  read_bytes(is, idx.data(), index_len, "index");
  uint32_t crc_stored = read_pod<uint32_t>(is, "checksum");
  uint32_t crc = crc32(blob.meta.data(), blob.meta.size());
  crc = crc32(idx.data(), idx.size(), crc);
  require(crc == crc_stored, what + ": checksum mismatch (corrupt manifest or index)");

  uint64_t payload_len = read_pod<uint64_t>(is, "payload length");
  std::string payload(payload_len, '\0');
  read_bytes(is, payload.data(), payload_len, "payload");

  std::istringstream ix(idx);
  std::string line;
  uint64_t prev_end = 0;
  while (std::getline(ix, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, dt;
    size_t rank;
    ls >> name >> dt >> rank;
    Shape shape(rank);
    for (auto& d : shape) ls >> d;
    uint64_t offset, nbytes;
    ls >> offset >> nbytes;
    require(!ls.fail(), what + ": malformed index line: " + line);
    require(offset >= prev_end && offset + nbytes <= payload_len,
            what + ": index entry '" + name + "' out of payload bounds (corrupt payload)");
    prev_end = offset + nbytes;
    Dtype dtype = dtype_from_name(dt);
    int64_t numel = shape_numel(shape);
    size_t esize = dtype == Dtype::F32 ? 4 : 8;
    require(nbytes == static_cast<uint64_t>(numel) * esize,
            what + ": index entry '" + name + "' byte count disagrees with shape");
    if (dtype == Dtype::F32) {
      Tensor<float> t(shape);
      std::memcpy(t.ptr(), payload.data() + offset, nbytes);
      blob.tensors.emplace(name, AnyTensor(std::move(t)));
    } else {
      Tensor<double> t(shape);
      std::memcpy(t.ptr(), payload.data() + offset, nbytes);
      blob.tensors.emplace(name, AnyTensor(std::move(t)));
    }
  }
  return blob;
}

inline void write_blob_file(const std::string& path, const char magic[4], const TensorBlob& blob) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot open for writing: " + path);
  write_tensor_blob(os, magic, blob);
  require(os.good(), "I/O failure writing " + path);
}

inline TensorBlob read_blob_file(const std::string& path, const char magic[4],
                                 const std::string& what) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open: " + path);
  return read_tensor_blob(is, magic, what);
}

/// Key-value meta text helpers (one "key value" per line).
inline std::map<std::string, std::string> parse_meta(const std::string& meta) {
  std::map<std::string, std::string> kv;
  std::istringstream is(meta);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto sp = line.find(' ');
    if (sp == std::string::npos)
      kv[line] = "";
    else
      kv[line.substr(0, sp)] = line.substr(sp + 1);
  }
  return kv;
}

inline std::string meta_get(const std::map<std::string, std::string>& kv, const std::string& key,
                            const std::string& what) {
  auto it = kv.find(key);
  require(it != kv.end(), what + ": manifest missing key '" + key + "'");
  return it->second;
}

}  // namespace mm
