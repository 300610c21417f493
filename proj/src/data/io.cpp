/* Copyright 2026 The uqseg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. */

#include "uqseg/data/io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace uqseg::data {
namespace {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kVoxOffset = 352;

template <class T>
T get(const std::vector<unsigned char>& buf, std::size_t off) {
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  return v;
}

template <class T>
void put(std::vector<unsigned char>& buf, std::size_t off, T v) {
  std::memcpy(buf.data() + off, &v, sizeof(T));
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<unsigned char> out;
  unsigned char chunk[1 << 16];
  for (;;) {
    const int n = gzread(f, chunk, sizeof(chunk));
    if (n < 0) {
      int code = 0;
      const std::string msg = gzerror(f, &code);
      gzclose(f);
      throw TruncatedFile("read error in " + path.string() + ": " + msg);
    }
    if (n == 0) break;
    out.insert(out.end(), chunk, chunk + n);
  }
  gzclose(f);
  return out;
}

void write_all(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  const bool compress = path.extension() == ".gz";
  gzFile f = gzopen(path.c_str(), compress ? "wb6" : "wbT");
  if (!f) throw std::runtime_error("cannot write " + path.string());
  std::size_t done = 0;
  while (done < bytes.size()) {
    const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    if (gzwrite(f, bytes.data() + done, chunk) != static_cast<int>(chunk)) {
      gzclose(f);
      throw std::runtime_error("write failed for " + path.string());
    }
    done += chunk;
  }
  if (gzclose(f) != Z_OK) throw std::runtime_error("close failed for " + path.string());
}

std::size_t type_width(short code) {
  switch (code) {
    case 2: return 1;
    case 4: return 2;
    case 16: return 4;
    default: throw UnsupportedDatatype("unsupported NIfTI datatype code " + std::to_string(code));
  }
}

}  // namespace

NiftiVolume read_nifti(const std::filesystem::path& path) {
  const auto buf = read_all(path);
  if (buf.size() < kHeaderSize) throw TruncatedFile(path.string() + ": header shorter than 348 bytes");
  const char* magic = reinterpret_cast<const char*>(buf.data() + 344);
  if (std::memcmp(magic, "ni1\0", 4) == 0) {
    throw UnsupportedVariant(path.string() + ": detached-header NIfTI (ni1) is not supported");
  }
  if (std::memcmp(magic, "n+1\0", 4) != 0) throw BadMagic(path.string() + ": not a NIfTI-1 file");
  const auto sizeof_hdr = get<std::int32_t>(buf, 0);
  if (sizeof_hdr != 348) {
    throw UnsupportedVariant(path.string() + ": big-endian or malformed header (sizeof_hdr " +
                             std::to_string(sizeof_hdr) + ")");
  }
  const auto rank = get<std::int16_t>(buf, 40);
  if (rank < 1 || rank > 3) throw UnsupportedVariant(path.string() + ": only 1 to 3 dimensions are supported");
  const auto datatype = get<std::int16_t>(buf, 70);
  const std::size_t width = type_width(datatype);

  Shape shape;
  std::size_t count = 1;
  for (int i = rank; i >= 1; --i) {
    const auto d = get<std::int16_t>(buf, 40 + 2 * i);
    if (d < 1) throw FormatError(path.string() + ": non-positive dimension");
    shape.push_back(static_cast<std::size_t>(d));
    count *= static_cast<std::size_t>(d);
  }
  const float vox_offset = get<float>(buf, 108);
  const std::size_t offset = static_cast<std::size_t>(vox_offset);
  if (offset < kHeaderSize) throw FormatError(path.string() + ": vox_offset inside the header");
  if (buf.size() < offset + count * width) throw TruncatedFile(path.string() + ": payload shorter than header declares");

  const double slope = get<float>(buf, 112);
  const double inter = get<float>(buf, 116);
  std::vector<double> values(count);
  const unsigned char* p = buf.data() + offset;
  for (std::size_t i = 0; i < count; ++i) {
    double raw = 0.0;
    switch (datatype) {
      case 2: raw = p[i]; break;
      case 4: {
        std::int16_t v;
        std::memcpy(&v, p + 2 * i, 2);
        raw = v;
        break;
      }
      default: {
        float v;
        std::memcpy(&v, p + 4 * i, 4);
        raw = v;
      }
    }
    values[i] = (slope != 0.0 && std::isfinite(slope)) ? slope * raw + inter : raw;
  }
  NiftiVolume out;
  out.volume = Tensor(std::move(shape), std::move(values));
  for (int i = 0; i < 3; ++i) out.spacing[i] = get<float>(buf, 76 + 4 * (i + 1));
  return out;
}

void write_nifti(const std::filesystem::path& path, const Tensor& volume, const NiftiWriteOptions& options) {
  const auto& shape = volume.shape();
  if (shape.empty() || shape.size() > 3) throw ShapeError("write_nifti: rank must be 1 to 3");
  const short code = static_cast<short>(options.type);
  const std::size_t width = type_width(code);
  std::vector<unsigned char> buf(kVoxOffset + volume.numel() * width, 0);
  put<std::int32_t>(buf, 0, 348);
  put<char>(buf, 38, 'r');
  put<std::int16_t>(buf, 40, static_cast<std::int16_t>(shape.size()));
  for (std::size_t i = 1; i <= 7; ++i) {
    std::int16_t d = 1;
    if (i <= shape.size()) {
      const std::size_t s = shape[shape.size() - i];
      if (s > 32767) throw ShapeError("write_nifti: dimension too large");
      d = static_cast<std::int16_t>(s);
    }
    put<std::int16_t>(buf, 40 + 2 * i, d);
  }
  put<std::int16_t>(buf, 70, code);
  put<std::int16_t>(buf, 72, static_cast<std::int16_t>(8 * width));
  put<float>(buf, 76, 1.0f);
  for (int i = 0; i < 3; ++i) put<float>(buf, 76 + 4 * (i + 1), static_cast<float>(options.spacing[i]));
  put<float>(buf, 108, static_cast<float>(kVoxOffset));
  put<float>(buf, 112, static_cast<float>(options.scl_slope));
  put<float>(buf, 116, static_cast<float>(options.scl_inter));
  std::memcpy(buf.data() + 344, "n+1\0", 4);

  unsigned char* p = buf.data() + kVoxOffset;
  const auto v = volume.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    switch (options.type) {
      case NiftiType::uint8: {
        if (v[i] < 0 || v[i] > 255 || v[i] != std::floor(v[i])) throw std::invalid_argument("write_nifti: value not uint8");
        p[i] = static_cast<unsigned char>(v[i]);
        break;
      }
      case NiftiType::int16: {
        if (v[i] < -32768 || v[i] > 32767 || v[i] != std::floor(v[i])) {
          throw std::invalid_argument("write_nifti: value not int16");
        }
        const auto x = static_cast<std::int16_t>(v[i]);
        std::memcpy(p + 2 * i, &x, 2);
        break;
      }
      case NiftiType::float32: {
        const auto x = static_cast<float>(v[i]);
        std::memcpy(p + 4 * i, &x, 4);
        break;
      }
    }
  }
  write_all(path, buf);
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const std::uint32_t head[3] = {1, 1, static_cast<std::uint32_t>(t.rank())};
  os.write("UQTN", 4);
  os.write(reinterpret_cast<const char*>(head), sizeof(head));
  for (std::size_t d : t.shape()) {
    const std::uint64_t x = d;
    os.write(reinterpret_cast<const char*>(&x), 8);
  }
  os.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  std::uint32_t head[3];
  if (!is.read(magic, 4) || !is.read(reinterpret_cast<char*>(head), sizeof(head))) {
    throw TruncatedFile(path.string() + ": short tensor header");
  }
  if (std::memcmp(magic, "UQTN", 4) != 0) throw BadMagic(path.string() + ": not a UQTN tensor");
  if (head[0] != 1) throw UnsupportedVariant(path.string() + ": unknown UQTN version " + std::to_string(head[0]));
  if (head[1] != 1) throw UnsupportedDatatype(path.string() + ": unknown UQTN dtype " + std::to_string(head[1]));
  if (head[2] > 8) throw FormatError(path.string() + ": rank too large");
  Shape shape(head[2]);
  for (auto& d : shape) {
    std::uint64_t x;
    if (!is.read(reinterpret_cast<char*>(&x), 8)) throw TruncatedFile(path.string() + ": short tensor header");
    d = x;
  }
  std::vector<double> values(numel(shape));
  if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)))) {
    throw TruncatedFile(path.string() + ": short tensor payload");
  }
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace uqseg::data
