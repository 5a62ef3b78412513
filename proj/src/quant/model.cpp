#include "nlmr/quant/model.hpp"

#include <algorithm>

#include "nlmr/nlm/checkpoint.hpp"

namespace nlmr::quant {

namespace {

nlm::TensorRecord ToQuantRecord(const std::string& name, const QuantizedMatrix& q) {
  nlm::TensorRecord t;
  t.name = name;
  t.kind = nlm::TensorRecord::Kind::kInt16;
  t.dims = {q.rows(), q.cols()};
  t.ints.reserve(q.rows() * q.cols());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    for (std::size_t j = 0; j < q.cols(); ++j) t.ints.push_back(q.Int(i, j));
  }
  t.scales.assign(q.scales().begin(), q.scales().end());
  t.shifts.assign(q.shifts().begin(), q.shifts().end());
  return t;
}

QuantizedMatrix FromQuantRecord(const nlm::TensorRecord& t) {
  if (t.kind != nlm::TensorRecord::Kind::kInt16) throw DataError("tensor " + t.name + " is not int16");
  const std::size_t rows = t.dims[0];
  const std::size_t cols = t.dims.size() == 2 ? t.dims[1] : 1;
  std::vector<std::int16_t> column_major(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) column_major[j * rows + i] = t.ints[i * cols + j];
  }
  return QuantizedMatrix::FromParts(rows, cols, column_major, t.scales, t.shifts);
}

nlm::Vector ColumnVector(const QuantizedMatrix& q) {
  nlm::Vector v(static_cast<Eigen::Index>(q.rows()));
  for (std::size_t i = 0; i < q.rows(); ++i) v[static_cast<Eigen::Index>(i)] = static_cast<float>(q.Value(i, 0));
  return v;
}

template <typename Fn>
void ForEachTensor(const QuantizedModel& m, Fn fn) {
  fn("embedding", m.embedding());
  for (std::size_t l = 0; l < m.layers().size(); ++l) {
    const std::string prefix = "lstm." + std::to_string(l) + ".";
    fn(prefix + "weight", m.layers()[l].weight);
    fn(prefix + "bias", m.layers()[l].bias);
    fn(prefix + "projection", m.layers()[l].projection);
  }
  fn("output.weight", m.output_weight());
  fn("output.bias", m.output_bias());
}

}  // namespace

QuantizedModel QuantizedModel::FromParameters(const nlm::Parameters& params) {
  params.config.Validate();
  QuantizedModel m;
  m.config_ = params.config;
  m.embedding_ = QuantizedMatrix::Quantize(params.embedding);
  for (const auto& l : params.layers) {
    m.layers_.push_back({QuantizedMatrix::Quantize(l.weight), QuantizedMatrix::Quantize(l.bias),
                         QuantizedMatrix::Quantize(l.projection)});
  }
  m.output_weight_ = QuantizedMatrix::Quantize(params.output_weight);
  m.output_bias_ = QuantizedMatrix::Quantize(params.output_bias);
  m.lnz_q_ = QuantizedMatrix::Quantize(params.lnz);
  m.Cache();
  return m;
}

void QuantizedModel::Cache() {
  bias_.clear();
  for (const auto& l : layers_) bias_.push_back(ColumnVector(l.bias));
  out_bias_ = ColumnVector(output_bias_);
  lnz_ = static_cast<float>(lnz_q_.Value(0, 0));
}

nlm::Vector QuantizedModel::Step(nlm::LmState& state, TokenId token) const {
  if (token < 0 || static_cast<std::size_t>(token) >= config_.vocab_size) {
    throw DataError("token id " + std::to_string(token) + " outside model vocabulary");
  }
  const auto col = static_cast<std::size_t>(token);
  nlm::Vector x(static_cast<Eigen::Index>(config_.embed_dim));
  for (std::size_t i = 0; i < config_.embed_dim; ++i) {
    x[static_cast<Eigen::Index>(i)] = static_cast<float>(embedding_.Value(i, col));
  }
  nlm::Vector in, gates, h;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const auto& layer = layers_[l];
    in.resize(x.size() + state.projected[l].size());
    in << x, state.projected[l];
    gates.resize(static_cast<Eigen::Index>(layer.weight.cols()));
    QuantizedMatVec(layer.weight, std::span<const float>(in.data(), static_cast<std::size_t>(in.size())),
                    std::span<float>(gates.data(), static_cast<std::size_t>(gates.size())));
    gates += bias_[l];
    h = nlm::LstmCell(gates, state.cell[l]);
    nlm::Vector r(static_cast<Eigen::Index>(config_.projection_dim));
    QuantizedMatVec(layer.projection, std::span<const float>(h.data(), static_cast<std::size_t>(h.size())),
                    std::span<float>(r.data(), static_cast<std::size_t>(r.size())));
    state.projected[l] = r;
    if (config_.residual && l > 0) {
      x += r;
    } else {
      x = std::move(r);
    }
  }
  if (!x.allFinite()) throw NumericError("non-finite activation in forward step");
  return x;
}

float QuantizedModel::Logit(const nlm::Vector& context, TokenId word) const {
  const auto a = QuantizeActivation(std::span<const float>(context.data(), static_cast<std::size_t>(context.size())));
  const auto j = static_cast<std::size_t>(word);
  const std::int64_t dot = IntegerDot(output_weight_, j, a);
  const double z = output_weight_.scale(j) * (a.step * static_cast<double>(dot) +
                                              a.center * static_cast<double>(output_weight_.ColumnSum(j))) +
                   output_weight_.shift(j) * a.sum;
  return static_cast<float>(z) + out_bias_[word];
}

void QuantizedModel::Logits(const nlm::Vector& context, nlm::Vector& out) const {
  out.resize(static_cast<Eigen::Index>(config_.vocab_size));
  QuantizedMatVec(output_weight_, std::span<const float>(context.data(), static_cast<std::size_t>(context.size())),
                  std::span<float>(out.data(), static_cast<std::size_t>(out.size())));
  out += out_bias_;
}

nlm::Parameters QuantizedModel::Dequantize() const {
  auto p = nlm::Parameters::Zeros(config_);
  p.embedding = embedding_.Dequantize();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    p.layers[l].weight = layers_[l].weight.Dequantize();
    p.layers[l].bias = layers_[l].bias.Dequantize();
    p.layers[l].projection = layers_[l].projection.Dequantize();
  }
  p.output_weight = output_weight_.Dequantize();
  p.output_bias = output_bias_.Dequantize();
  p.lnz = lnz_q_.Dequantize();
  return p;
}

void QuantizedModel::Save(const std::filesystem::path& path) const {
  nlm::CheckpointFile file;
  for (const auto& [k, v] : config_.ToKeyValues()) file.header[k] = v;
  file.header["quantized"] = "1";
  file.header["format"] = "int16-per-column";
  ForEachTensor(*this, [&](const std::string& name, const QuantizedMatrix& q) {
    file.tensors.push_back(ToQuantRecord(name, q));
  });
  file.tensors.push_back(ToQuantRecord("nce.lnz", lnz_q_));
  nlm::WriteCheckpointFile(path, file);
}

QuantizedModel QuantizedModel::Load(const std::filesystem::path& path) {
  const auto file = nlm::ReadCheckpointFile(path);
  auto it = file.header.find("quantized");
  if (it == file.header.end() || it->second != "1") {
    throw DataError(path.string() + ": not a quantized checkpoint");
  }
  QuantizedModel m;
  m.config_ = nlm::ModelConfig::FromKeyValues(file.header);
  const auto shapes = nlm::Parameters::Zeros(m.config_);
  auto get = [&](const std::string& name) {
    auto t = std::find_if(file.tensors.begin(), file.tensors.end(), [&](const auto& r) { return r.name == name; });
    if (t == file.tensors.end()) throw DataError(path.string() + ": missing tensor " + name);
    auto q = FromQuantRecord(*t);
    for (const auto& [n, ref] : shapes.Tensors()) {
      if (n == name && (static_cast<std::size_t>(ref->rows()) != q.rows() ||
                        static_cast<std::size_t>(ref->cols()) != q.cols())) {
        throw DataError(path.string() + ": tensor " + name + " has the wrong shape for the stored config");
      }
    }
    return q;
  };
  m.embedding_ = get("embedding");
  for (std::size_t l = 0; l < m.config_.layers; ++l) {
    const std::string prefix = "lstm." + std::to_string(l) + ".";
    m.layers_.push_back({get(prefix + "weight"), get(prefix + "bias"), get(prefix + "projection")});
  }
  m.output_weight_ = get("output.weight");
  m.output_bias_ = get("output.bias");
  m.lnz_q_ = get("nce.lnz");
  m.Cache();
  return m;
}

bool operator==(const QuantizedModel& a, const QuantizedModel& b) {
  if (!(a.config_ == b.config_) || a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (!(a.layers_[l].weight == b.layers_[l].weight) || !(a.layers_[l].bias == b.layers_[l].bias) ||
        !(a.layers_[l].projection == b.layers_[l].projection)) {
      return false;
    }
  }
  return a.embedding_ == b.embedding_ && a.output_weight_ == b.output_weight_ && a.output_bias_ == b.output_bias_ &&
         a.lnz_q_ == b.lnz_q_;
}

}  // namespace nlmr::quant
