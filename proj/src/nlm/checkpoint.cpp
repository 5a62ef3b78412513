#include "nlmr/nlm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <algorithm>
#include <fstream>

namespace nlmr::nlm {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'N', 'L', 'M', 'R', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void Put(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  template <typename T>
  void PutArray(const std::vector<T>& v) {
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  }
  void PutString(const std::string& s) {
    Put(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  template <typename T>
  T Get() {
    T v;
    Read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  template <typename T>
  std::vector<T> GetArray(std::uint64_t n) {
    if (n > (std::uint64_t{1} << 34)) Fail("implausible tensor size");
    std::vector<T> v(n);
    Read(reinterpret_cast<char*>(v.data()), n * sizeof(T));
    return v;
  }
  std::string GetString() {
    const auto n = Get<std::uint32_t>();
    if (n > (1u << 20)) Fail("implausible string length");
    std::string s(n, '\0');
    Read(s.data(), n);
    return s;
  }
  [[noreturn]] void Fail(const std::string& what) { throw DataError(source_ + ": " + what); }

 private:
  void Read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) Fail("truncated checkpoint");
  }

  std::istream& in_;
  std::string source_;
};

std::uint64_t Elements(const TensorRecord& r) {
  std::uint64_t n = 1;
  for (auto d : r.dims) n *= d;
  return n;
}

std::uint64_t Columns(const TensorRecord& r) { return r.dims.size() == 2 ? r.dims[1] : 1; }

}  // namespace

void WriteCheckpointFile(const std::filesystem::path& path, const CheckpointFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  Writer w(out);
  out.write(kMagic, sizeof kMagic);
  w.Put(kCheckpointVersion);
  w.Put(static_cast<std::uint32_t>(file.header.size()));
  for (const auto& [k, v] : file.header) {
    w.PutString(k);
    w.PutString(v);
  }
  w.Put(static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& t : file.tensors) {
    w.PutString(t.name);
    w.Put(static_cast<std::uint8_t>(t.kind));
    w.Put(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) w.Put(d);
    const auto n = Elements(t);
    if (t.kind == TensorRecord::Kind::kFloat32) {
      if (t.values.size() != n) throw Error("tensor " + t.name + ": payload does not match dims");
      w.PutArray(t.values);
    } else {
      if (t.ints.size() != n || t.scales.size() != Columns(t) || t.shifts.size() != Columns(t)) {
        throw Error("tensor " + t.name + ": payload does not match dims");
      }
      w.PutArray(t.ints);
      w.PutArray(t.scales);
      w.PutArray(t.shifts);
    }
  }
  if (!out) throw DataError("error writing " + path.string());
}

CheckpointFile ReadCheckpointFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  Reader r(in, path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (in.gcount() != sizeof magic || std::memcmp(magic, kMagic, sizeof magic) != 0) r.Fail("not a checkpoint file");
  const auto version = r.Get<std::uint32_t>();
  if (version != kCheckpointVersion) r.Fail("unsupported checkpoint version " + std::to_string(version));
  CheckpointFile file;
  const auto header = r.Get<std::uint32_t>();
  for (std::uint32_t i = 0; i < header; ++i) {
    auto k = r.GetString();
    file.header[k] = r.GetString();
  }
  const auto count = r.Get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord t;
    t.name = r.GetString();
    const auto kind = r.Get<std::uint8_t>();
    if (kind > 1) r.Fail("tensor " + t.name + ": unknown kind");
    t.kind = static_cast<TensorRecord::Kind>(kind);
    const auto rank = r.Get<std::uint32_t>();
    if (rank < 1 || rank > 2) r.Fail("tensor " + t.name + ": unsupported rank");
    for (std::uint32_t d = 0; d < rank; ++d) t.dims.push_back(r.Get<std::uint64_t>());
    const auto n = Elements(t);
    if (t.kind == TensorRecord::Kind::kFloat32) {
      t.values = r.GetArray<float>(n);
    } else {
      t.ints = r.GetArray<std::int16_t>(n);
      t.scales = r.GetArray<double>(Columns(t));
      t.shifts = r.GetArray<double>(Columns(t));
    }
    file.tensors.push_back(std::move(t));
  }
  return file;
}

TensorRecord ToRecord(const std::string& name, const Parameters::Matrix& m) {
  TensorRecord t;
  t.name = name;
  t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.values.push_back(m(i, j));
  }
  return t;
}

Parameters::Matrix FromRecord(const TensorRecord& t) {
  if (t.kind != TensorRecord::Kind::kFloat32) throw DataError("tensor " + t.name + " is not float32");
  const auto rows = static_cast<Eigen::Index>(t.dims[0]);
  const auto cols = static_cast<Eigen::Index>(t.dims.size() == 2 ? t.dims[1] : 1);
  Parameters::Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = t.values[k++];
  }
  return m;
}

void SaveParameters(const std::filesystem::path& path, const Parameters& params) {
  CheckpointFile file;
  for (const auto& [k, v] : params.config.ToKeyValues()) file.header[k] = v;
  file.header["quantized"] = "0";
  for (const auto& [name, m] : params.Tensors()) file.tensors.push_back(ToRecord(name, *m));
  WriteCheckpointFile(path, file);
}

Parameters LoadParameters(const std::filesystem::path& path) {
  const auto file = ReadCheckpointFile(path);
  if (auto it = file.header.find("quantized"); it != file.header.end() && it->second == "1") {
    throw DataError(path.string() + ": checkpoint is quantized; load it as a quantized model");
  }
  auto params = Parameters::Zeros(ModelConfig::FromKeyValues(file.header));
  for (auto& [name, m] : params.Tensors()) {
    auto it = std::find_if(file.tensors.begin(), file.tensors.end(), [&](const auto& t) { return t.name == name; });
    if (it == file.tensors.end()) throw DataError(path.string() + ": missing tensor " + name);
    auto loaded = FromRecord(*it);
    if (loaded.rows() != m->rows() || loaded.cols() != m->cols()) {
      throw DataError(path.string() + ": tensor " + name + " has the wrong shape for the stored config");
    }
    *m = std::move(loaded);
  }
  return params;
}

bool IsQuantizedCheckpoint(const std::filesystem::path& path) {
  const auto file = ReadCheckpointFile(path);
  auto it = file.header.find("quantized");
  return it != file.header.end() && it->second == "1";
}

}  // namespace nlmr::nlm
