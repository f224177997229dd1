#include "psteer/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace psteer {

static_assert(std::endian::native == std::endian::little,
              "PST1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'P', 'S', 'T', '1'};

void fail_io(const std::filesystem::path& path, const std::string& what) {
  throw IoError(path.string() + ": " + what);
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const Tensor& t, Dtype dtype) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_io(path, "cannot open for writing");

  unsigned char header[8] = {};
  std::memcpy(header, kMagic, 4);
  header[4] = static_cast<unsigned char>(dtype);
  header[5] = static_cast<unsigned char>(t.rank());
  out.write(reinterpret_cast<const char*>(header), 8);

  for (Index d : t.dims()) {
    const std::uint64_t v = static_cast<std::uint64_t>(d);
    out.write(reinterpret_cast<const char*>(&v), 8);
  }

  if (dtype == Dtype::kF64) {
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.size()) * 8);
  } else {
    std::vector<float> buf(static_cast<std::size_t>(t.size()));
    for (Index i = 0; i < t.size(); ++i) buf[static_cast<std::size_t>(i)] = static_cast<float>(t(i));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(t.size()) * 4);
  }
  if (!out) fail_io(path, "write failed");
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io(path, "cannot open for reading");

  unsigned char header[8];
  in.read(reinterpret_cast<char*>(header), 8);
  if (!in) fail_io(path, "truncated header");
  if (std::memcmp(header, kMagic, 4) != 0) fail_io(path, "bad magic (not a PST1 file)");

  const unsigned char dtype_code = header[4];
  if (dtype_code > 1) fail_io(path, "unknown dtype code " + std::to_string(dtype_code));
  const unsigned char rank = header[5];
  if (rank < 1 || rank > 4) fail_io(path, "rank out of range 1..4");
  if (header[6] != 0 || header[7] != 0) fail_io(path, "reserved header bytes not zero");

  std::vector<Index> dims(rank);
  std::uint64_t count = 1;
  for (auto& d : dims) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (!in) fail_io(path, "truncated dims");
    if (v == 0 || v > (1ULL << 40)) fail_io(path, "implausible dim " + std::to_string(v));
    d = static_cast<Index>(v);
    count *= v;
  }

  Vector data(static_cast<Index>(count));
  if (dtype_code == 0) {
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count) * 8);
    if (!in) fail_io(path, "payload shorter than dims imply");
  } else {
    std::vector<float> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count) * 4);
    if (!in) fail_io(path, "payload shorter than dims imply");
    for (std::uint64_t i = 0; i < count; ++i) {
      data(static_cast<Index>(i)) = static_cast<double>(buf[i]);
    }
  }
  // Reject trailing bytes: the container has no footer.
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) fail_io(path, "payload longer than dims imply");

  try {
    return Tensor(std::move(dims), std::move(data));
  } catch (const NumericError& e) {
    fail_io(path, e.what());
  }
  return Tensor{};  // unreachable
}

}  // namespace psteer
