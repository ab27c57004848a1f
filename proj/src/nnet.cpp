#include "lexinmt/nnet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lexinmt::nnet {

void ModelConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0) fail("ModelConfig: positive sizes required");
  if (d_model % n_heads != 0) fail("ModelConfig: d_model must be divisible by n_heads");
  if (n_enc_layers < 0 || n_dec_layers < 0) fail("ModelConfig: negative layer count");
  if (ffn_dim <= 0) fail("ModelConfig: ffn_dim must be positive");
  if (dropout < 0.0 || dropout >= 1.0) fail("ModelConfig: dropout must be in [0,1)");
  if (vocab_size <= 0) fail("ModelConfig: vocab_size must be set");
  if (max_positions <= 0) fail("ModelConfig: max_positions must be positive");
}

ojson ModelConfig::to_json() const {
  ojson j;
  j["d_model"] = d_model;
  j["n_heads"] = n_heads;
  j["n_enc_layers"] = n_enc_layers;
  j["n_dec_layers"] = n_dec_layers;
  j["ffn_dim"] = ffn_dim;
  j["dropout"] = dropout;
  j["vocab_size"] = vocab_size;
  j["max_positions"] = max_positions;
  return j;
}

ModelConfig ModelConfig::from_json(const ojson& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.n_enc_layers = j.at("n_enc_layers").get<int>();
  c.n_dec_layers = j.at("n_dec_layers").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_positions = j.at("max_positions").get<int>();
  return c;
}

Matrix& ParamStore::create(const std::string& name, int rows, int cols) {
  if (params_.count(name)) fail("ParamStore: duplicate tensor name " + name);
  auto [it, ok] = params_.emplace(name, Matrix(rows, cols));
  order_.push_back(name);
  return it->second;
}

Matrix& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) fail("ParamStore: unknown tensor " + name);
  return it->second;
}

const Matrix& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) fail("ParamStore: unknown tensor " + name);
  return it->second;
}

bool ParamStore::has(const std::string& name) const { return params_.count(name) > 0; }

size_t ParamStore::total_entries() const {
  size_t n = 0;
  for (const auto& [_, m] : params_) n += m.size();
  return n;
}

ojson AdamConfig::to_json() const {
  ojson j;
  j["peak_lr"] = peak_lr;
  j["warmup"] = warmup;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["eps"] = eps;
  return j;
}

AdamConfig AdamConfig::from_json(const ojson& j) {
  AdamConfig c;
  c.peak_lr = j.at("peak_lr").get<double>();
  c.warmup = j.at("warmup").get<int64_t>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.eps = j.at("eps").get<double>();
  return c;
}

double adam_lr(const AdamConfig& cfg, int64_t step) {
  if (step < 1) fail("adam_lr: step must be >= 1");
  double s = static_cast<double>(step);
  double w = static_cast<double>(cfg.warmup);
  if (cfg.warmup <= 0) return cfg.peak_lr;
  return cfg.peak_lr * std::min(s / w, std::sqrt(w / s));
}

void adam_step(ParamStore& params, const GradMap& grads, AdamState& state,
               const AdamConfig& cfg) {
  // Validate everything up front: a NaN gradient must not half-apply a step.
  for (const auto& [name, g] : grads) {
    const Matrix& p = params.get(name);
    if (!p.same_shape(g)) fail("adam_step: gradient shape mismatch for " + name);
    if (!g.all_finite()) fail("adam_step: non-finite gradient for " + name);
  }

  state.step += 1;
  const double lr = adam_lr(cfg, state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (const auto& [name, g] : grads) {
    Matrix& p = params.get(name);
    auto mit = state.m.find(name);
    if (mit == state.m.end()) {
      mit = state.m.emplace(name, Matrix(p.rows, p.cols)).first;
      state.v.emplace(name, Matrix(p.rows, p.cols));
    }
    Matrix& m = mit->second;
    Matrix& v = state.v.at(name);
    for (size_t i = 0; i < p.d.size(); ++i) {
      m.d[i] = cfg.beta1 * m.d[i] + (1.0 - cfg.beta1) * g.d[i];
      v.d[i] = cfg.beta2 * v.d[i] + (1.0 - cfg.beta2) * g.d[i] * g.d[i];
      double mhat = m.d[i] / bc1;
      double vhat = v.d[i] / bc2;
      p.d[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

Matrix position_encoding(const std::vector<int>& positions, int d_model,
                         int max_positions) {
  Matrix pe(static_cast<int>(positions.size()), d_model);
  for (size_t r = 0; r < positions.size(); ++r) {
    int pos = positions[r];
    if (pos < 0 || pos >= max_positions)
      fail("position_encoding: position " + std::to_string(pos) +
           " out of range [0," + std::to_string(max_positions) + ")");
    double* row = pe.row(static_cast<int>(r));
    for (int j = 0; j < d_model; j += 2) {
      double denom = std::pow(10000.0, static_cast<double>(j) / d_model);
      row[j] = std::sin(pos / denom);
      if (j + 1 < d_model) row[j + 1] = std::cos(pos / denom);
    }
  }
  return pe;
}

Matrix dropout_mask(int rows, int cols, double p, uint64_t seed, int64_t step,
                    const std::string& tensor_name) {
  Matrix m = Matrix::filled(rows, cols, 1.0);
  if (p <= 0.0) return m;
  uint64_t name_h = 1469598103934665603ULL;
  for (char c : tensor_name) name_h = (name_h ^ static_cast<uint64_t>(c)) * 1099511628211ULL;
  uint64_t base = DetRng::mix(DetRng::mix(seed, static_cast<uint64_t>(step)), name_h);
  const double keep = 1.0 - p;
  for (size_t i = 0; i < m.d.size(); ++i) {
    uint64_t h = DetRng::mix(base, i);
    double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    m.d[i] = u < p ? 0.0 : 1.0 / keep;
  }
  return m;
}

void init_normal(Matrix& m, DetRng& rng, double std_dev) {
  for (auto& x : m.d) x = rng.normal() * std_dev;
}

namespace {

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

struct Reader {
  const std::string& s;
  size_t pos = 0;
  explicit Reader(const std::string& str) : s(str) {}
  void need(size_t n) {
    if (pos + n > s.size()) fail("checkpoint: truncated file");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(s[pos++])) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(s[pos++])) << (8 * i);
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string out = s.substr(pos, n);
    pos += n;
    return out;
  }
};

constexpr char kMagic[4] = {'L', 'X', 'F', '1'};
constexpr uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const ojson& config,
                     const ParamStore& params) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  std::string cfg = config.dump();
  put_u64(out, cfg.size());
  out += cfg;
  put_u64(out, params.names().size());
  for (const auto& name : params.names()) {
    const Matrix& m = params.get(name);
    put_u64(out, name.size());
    out += name;
    put_u64(out, static_cast<uint64_t>(m.rows));
    put_u64(out, static_cast<uint64_t>(m.cols));
    for (double x : m.d) put_f64(out, x);
  }
  atomic_write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::string data = read_file(path);
  Reader r(data);
  std::string magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    fail("checkpoint: bad magic in " + path);
  uint32_t version = r.u32();
  if (version != kVersion)
    fail("checkpoint: unsupported version " + std::to_string(version));
  uint64_t cfg_len = r.u64();
  std::string cfg_str = r.bytes(cfg_len);
  Checkpoint ck;
  try {
    ck.config = ojson::parse(cfg_str);
  } catch (const std::exception& e) {
    fail("checkpoint: bad config record: " + std::string(e.what()));
  }
  uint64_t n_tensors = r.u64();
  for (uint64_t t = 0; t < n_tensors; ++t) {
    uint64_t name_len = r.u64();
    std::string name = r.bytes(name_len);
    uint64_t rows = r.u64();
    uint64_t cols = r.u64();
    Matrix& m = ck.params.create(name, static_cast<int>(rows), static_cast<int>(cols));
    for (auto& x : m.d) x = r.f64();
  }
  if (r.pos != data.size()) fail("checkpoint: trailing bytes in " + path);
  return ck;
}

void validate_params(
    const ParamStore& params,
    const std::vector<std::pair<std::string, std::pair<int, int>>>& expected) {
  if (params.names().size() != expected.size())
    fail("checkpoint: tensor count mismatch (" +
         std::to_string(params.names().size()) + " vs expected " +
         std::to_string(expected.size()) + ")");
  for (const auto& [name, shape] : expected) {
    if (!params.has(name)) fail("checkpoint: missing tensor " + name);
    const Matrix& m = params.get(name);
    if (m.rows != shape.first || m.cols != shape.second)
      fail("checkpoint: shape mismatch for " + name);
    if (!m.all_finite()) fail("checkpoint: non-finite values in " + name);
  }
}

}  // namespace lexinmt::nnet
