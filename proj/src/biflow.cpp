#include "egoflow/biflow.hpp"

#include <cstring>
#include <fstream>
#include <numbers>

namespace egoflow {

namespace {

using ad::Var;

constexpr char kMagic[8] = {'E', 'G', 'F', 'L', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

Matrix gaussian(int rows, int cols, double stddev, Rng& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

std::shared_ptr<const std::vector<int>> index_of(std::vector<int> v) {
  return std::make_shared<const std::vector<int>>(std::move(v));
}

// Row r of a candidate matrix belongs to agent r % A.
Matrix film_forward(const Matrix& z, const Matrix& film, int A) {
  const Eigen::Index D = z.cols();
  if (film.rows() != A || film.cols() != 2 * D || z.rows() % A != 0) throw Error("film: shape mismatch");
  Matrix out(z.rows(), D);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const Eigen::Index a = r % A;
    out.row(r) = ((1.0 + film.row(a).tail(D).array()) * z.row(r).array() + film.row(a).head(D).array()).matrix();
  }
  return out;
}

Var wta_node(Var traj, Var logits, const WtaResult& w) {
  Matrix value(1, 1);
  value(0, 0) = w.loss;
  return traj.tape->record(std::move(value), {traj, logits},
                           [traj, logits, dt = w.d_trajectories, dl = w.d_logits](ad::Tape& t, const Matrix& g) {
                             const double s = g(0, 0);
                             if (t.requires_grad(traj)) t.accumulate_expr(traj, dt * s);
                             if (t.requires_grad(logits)) {
                               t.accumulate_expr(logits, Eigen::Map<const Matrix>(dl.data(), dl.size(), 1) * s);
                             }
                           });
}

Matrix replicate_rows(const Matrix& m, int K) { return m.replicate(K, 1); }

Matrix logits_grid(const Matrix& column, int K, int A) {
  return Eigen::Map<const Matrix>(column.data(), K, A);
}

}  // namespace

Var film_apply(Var z, Var film, int A) {
  Matrix out = film_forward(z.value(), film.value(), A);
  return z.tape->record(std::move(out), {z, film}, [z, film, A](ad::Tape& t, const Matrix& g) {
    const Matrix& zv = z.value();
    const Matrix& fv = film.value();
    const Eigen::Index D = zv.cols();
    if (t.requires_grad(z)) {
      Matrix dz(zv.rows(), D);
      for (Eigen::Index r = 0; r < zv.rows(); ++r) {
        dz.row(r) = (g.row(r).array() * (1.0 + fv.row(r % A).tail(D).array())).matrix();
      }
      t.accumulate(z, dz);
    }
    if (t.requires_grad(film)) {
      Matrix df = Matrix::Zero(A, 2 * D);
      for (Eigen::Index r = 0; r < zv.rows(); ++r) {
        const Eigen::Index a = r % A;
        df.row(a).head(D) += g.row(r);
        df.row(a).tail(D) += g.row(r).cwiseProduct(zv.row(r));
      }
      t.accumulate(film, df);
    }
  });
}

Matrix time_features(double t, int dim) {
  Matrix f = Matrix::Zero(1, dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / std::max(half, 1));
    const double angle = 1000.0 * t * freq;
    f(0, i) = std::sin(angle);
    f(0, half + i) = std::cos(angle);
  }
  return f;
}

FilmParams FilmParams::zeros(int A, int D) { return {Matrix::Zero(A, D), Matrix::Zero(A, D)}; }

Matrix film_modulate(const Matrix& z, const FilmParams& film) {
  if (film.beta.rows() != film.gamma.rows() || film.beta.cols() != film.gamma.cols()) {
    throw Error("film: beta and gamma differ in shape");
  }
  Matrix packed(film.beta.rows(), 2 * film.beta.cols());
  packed << film.beta, film.gamma;
  return film_forward(z, packed, static_cast<int>(film.beta.rows()));
}

FlowDraw FlowDraw::sample(int K, int A, int Tp, int Tf, const TimeSampler& times, Rng& rng) {
  FlowDraw d;
  d.t_history = times.sample(rng);
  d.t_future = times.sample(rng);
  d.noise_history = gaussian(K * A, 2 * Tp, 1.0, rng);
  d.noise_future = gaussian(K * A, 2 * Tf, 1.0, rng);
  return d;
}

// ---------------------------------------------------------------- config

void ModelConfig::validate() const {
  if (latent_dim < 2 || heads < 1 || latent_dim % heads != 0) {
    throw ConfigError("latent_dim must be a positive multiple of heads");
  }
  if (ffn_mult < 1 || modes < 1 || kk_layers < 0 || decoder_layers < 0) throw ConfigError("invalid layer counts");
  if (history_steps < 1 || future_steps < 1) throw ConfigError("history/future steps must be positive");
  if (max_agents < 1) throw ConfigError("max_agents must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"latent_dim", latent_dim},
          {"heads", heads},
          {"ffn_mult", ffn_mult},
          {"modes", modes},
          {"kk_layers", kk_layers},
          {"decoder_layers", decoder_layers},
          {"history_steps", history_steps},
          {"future_steps", future_steps},
          {"max_agents", max_agents},
          {"agent_pe", agent_pe},
          {"seed", seed},
          {"ablations",
           {{"social", ablations.social}, {"anchor", ablations.anchor}, {"shared_encoder", ablations.shared_encoder}}}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  check_keys(j,
             {"latent_dim", "heads", "ffn_mult", "modes", "kk_layers", "decoder_layers", "history_steps",
              "future_steps", "max_agents", "agent_pe", "seed", "ablations"},
             "model");
  ModelConfig c;
  read_key(j, "latent_dim", c.latent_dim, "model");
  read_key(j, "heads", c.heads, "model");
  read_key(j, "ffn_mult", c.ffn_mult, "model");
  read_key(j, "modes", c.modes, "model");
  read_key(j, "kk_layers", c.kk_layers, "model");
  read_key(j, "decoder_layers", c.decoder_layers, "model");
  read_key(j, "history_steps", c.history_steps, "model");
  read_key(j, "future_steps", c.future_steps, "model");
  read_key(j, "max_agents", c.max_agents, "model");
  read_key(j, "agent_pe", c.agent_pe, "model");
  read_key(j, "seed", c.seed, "model");
  if (j.contains("ablations")) {
    const auto& a = j["ablations"];
    check_keys(a, {"social", "anchor", "shared_encoder"}, "model.ablations");
    read_key(a, "social", c.ablations.social, "model.ablations");
    read_key(a, "anchor", c.ablations.anchor, "model.ablations");
    read_key(a, "shared_encoder", c.ablations.shared_encoder, "model.ablations");
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- construction

BiFlowModel::LinearIx BiFlowModel::make_linear(const std::string& name, int in, int out, double gain, Rng& rng) {
  LinearIx l;
  l.w = params_.add(name + ".w", gaussian(in, out, gain / std::sqrt(static_cast<double>(in)), rng));
  l.b = params_.add(name + ".b", Matrix::Zero(1, out));
  return l;
}

BiFlowModel::NormIx BiFlowModel::make_norm(const std::string& name, int dim) {
  return {params_.add(name + ".g", Matrix::Ones(1, dim)), params_.add(name + ".b", Matrix::Zero(1, dim))};
}

BiFlowModel::MlpIx BiFlowModel::make_mlp(const std::string& name, int in, int hidden, int out, double out_gain,
                                         Rng& rng) {
  MlpIx m;
  m.l1 = make_linear(name + ".l1", in, hidden, 1.0, rng);
  m.l2 = make_linear(name + ".l2", hidden, out, out_gain, rng);
  return m;
}

BiFlowModel::BlockIx BiFlowModel::make_block(const std::string& name, Rng& rng) {
  const int D = config_.latent_dim;
  BlockIx b;
  b.ln1 = make_norm(name + ".ln1", D);
  b.q = make_linear(name + ".q", D, D, 1.0, rng);
  b.k = make_linear(name + ".k", D, D, 1.0, rng);
  b.v = make_linear(name + ".v", D, D, 1.0, rng);
  b.o = make_linear(name + ".o", D, D, 0.5, rng);
  b.ln2 = make_norm(name + ".ln2", D);
  b.ff1 = make_linear(name + ".ff1", D, config_.ffn_mult * D, 1.0, rng);
  b.ff2 = make_linear(name + ".ff2", config_.ffn_mult * D, D, 0.5, rng);
  return b;
}

BiFlowModel::EncoderIx BiFlowModel::make_encoder(const std::string& prefix, Rng& rng) {
  const int D = config_.latent_dim;
  EncoderIx e;
  e.input = make_mlp(prefix + ".input", 3 * config_.history_steps, D, D, 1.0, rng);
  e.social = make_block(prefix + ".social", rng);
  e.pe = params_.add(prefix + ".agent_pe", gaussian(config_.max_agents, D, 0.1, rng));
  e.context = make_block(prefix + ".context", rng);
  return e;
}

BiFlowModel::DecoderIx BiFlowModel::make_decoder(const std::string& prefix, int T, Rng& rng) {
  const int D = config_.latent_dim;
  DecoderIx d;
  d.fuse = make_linear(prefix + ".fuse", D, D, 1.0, rng);
  d.state = make_linear(prefix + ".state", 2 * T, D, 1.0, rng);
  d.time = make_mlp(prefix + ".time", D, D, D, 1.0, rng);
  d.modes = params_.add(prefix + ".modes", gaussian(config_.modes, D, 0.5, rng));
  for (int i = 0; i < config_.kk_layers; ++i) d.kk.push_back(make_block(prefix + ".kk" + std::to_string(i), rng));
  for (int i = 0; i < config_.decoder_layers; ++i) {
    d.layers.push_back(make_block(prefix + ".layer" + std::to_string(i), rng));
  }
  d.out = make_norm(prefix + ".out", D);
  d.head = make_mlp(prefix + ".head", D, D, 2 * T, 0.1, rng);
  d.logit = make_linear(prefix + ".logit", D, 1, 0.1, rng);
  return d;
}

BiFlowModel::BiFlowModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int D = config_.latent_dim;
  // One stream per group keeps a group's initial values independent of the others.
  Rng enc_rng = derive_rng(config_.seed, 1);
  encoder_ = make_encoder("encoder", enc_rng);
  Rng anchor_rng = derive_rng(config_.seed, 2);
  anchor_agent_norm_ = make_norm("anchor.agent_norm", D);
  anchor_agent_ = make_mlp("anchor.agent", D, D, D, 1.0, anchor_rng);
  anchor_scene_norm_ = make_norm("anchor.scene_norm", D);
  anchor_scene_ = make_mlp("anchor.scene", D, D, D, 1.0, anchor_rng);
  anchor_film_ = make_mlp("anchor.film", D, D, 2 * D, 0.1, anchor_rng);
  Rng future_rng = derive_rng(config_.seed, 3);
  future_ = make_decoder("future", config_.future_steps, future_rng);
  Rng history_rng = derive_rng(config_.seed, 4);
  history_ = make_decoder("history", config_.history_steps, history_rng);
  if (!config_.ablations.shared_encoder) {
    Rng rng = derive_rng(config_.seed, 5);
    history_encoder_ = make_encoder("history_encoder", rng);
  }
}

// ---------------------------------------------------------------- layers

Var BiFlowModel::apply(Binder& bind, const LinearIx& l, Var x) const { return ad::linear(x, bind(l.w), bind(l.b)); }

Var BiFlowModel::apply(Binder& bind, const NormIx& n, Var x) const {
  return ad::layer_norm(x, bind(n.g), bind(n.b));
}

Var BiFlowModel::apply(Binder& bind, const MlpIx& m, Var x) const {
  return apply(bind, m.l2, ad::silu(apply(bind, m.l1, x)));
}

Var BiFlowModel::apply(Binder& bind, const BlockIx& b, Var x,
                       const std::shared_ptr<const ad::AttentionGroups>& groups) const {
  Var y = apply(bind, b.ln1, x);
  Var att = ad::grouped_attention(apply(bind, b.q, y), apply(bind, b.k, y), apply(bind, b.v, y), groups,
                                  config_.heads);
  x = ad::add(x, apply(bind, b.o, att));
  y = apply(bind, b.ln2, x);
  return ad::add(x, apply(bind, b.ff2, ad::silu(apply(bind, b.ff1, y))));
}

// ---------------------------------------------------------------- forward

Var BiFlowModel::encode(Binder& bind, const ObservedHistory& history, bool history_stream) const {
  const int A = history.agents();
  const int Tp = config_.history_steps;
  if (A < 1) throw Error("encode: no agents");
  if (A > config_.max_agents) {
    throw Error("encode: " + std::to_string(A) + " agents exceed capacity " + std::to_string(config_.max_agents));
  }
  if (history.values.cols() != 2 * Tp || history.mask.cols() != Tp || history.mask.rows() != A) {
    throw Error("encode: history shape does not match the model");
  }
  if (history.ego_index < 0 || history.ego_index >= A) throw Error("encode: ego index out of range");
  const EncoderIx& enc = (history_stream && history_encoder_) ? *history_encoder_ : encoder_;

  Matrix input(A, 3 * Tp);
  input << history.values, history.mask;
  Var x = bind.tape().constant(std::move(input));
  Var h = apply(bind, enc.input, x);
  auto groups = ad::AttentionGroups::blocks(1, A);
  if (config_.ablations.social) h = apply(bind, enc.social, h, groups);
  if (config_.agent_pe) {
    std::vector<int> slot(static_cast<size_t>(A));
    int next = 1;
    for (int r = 0; r < A; ++r) slot[static_cast<size_t>(r)] = r == history.ego_index ? 0 : next++;
    h = ad::add(h, ad::gather_rows(bind(enc.pe), index_of(std::move(slot))));
  }
  return apply(bind, enc.context, h, groups);
}

Var BiFlowModel::agent_anchor(Binder& bind, Var h_enc) const {
  return apply(bind, anchor_agent_, apply(bind, anchor_agent_norm_, h_enc));
}

Var BiFlowModel::scene_anchor(Binder& bind, Var agent) const {
  return apply(bind, anchor_scene_, apply(bind, anchor_scene_norm_, ad::mean_rows(agent)));
}

Var BiFlowModel::film(Binder& bind, Var agent, Var scene) const {
  return apply(bind, anchor_film_, ad::add_row(agent, scene));
}

std::pair<Var, Var> BiFlowModel::decode(Binder& bind, Stream stream, Var h_enc, const Matrix& state, double t,
                                        Var film, int K) const {
  const int A = static_cast<int>(h_enc.rows());
  const int D = config_.latent_dim;
  const int T = stream == Stream::future ? config_.future_steps : config_.history_steps;
  if (K < 1 || K > config_.modes) throw Error("decode: K must lie in [1, " + std::to_string(config_.modes) + "]");
  if (state.rows() != static_cast<Eigen::Index>(K) * A || state.cols() != 2 * T) {
    throw Error("decode: state must be (K*A) x 2T");
  }
  if (film.rows() != A || film.cols() != 2 * D) throw Error("decode: film must be A x 2D");
  const DecoderIx& dec = stream == Stream::future ? future_ : history_;
  ad::Tape& tape = bind.tape();
  const int N = K * A;

  std::vector<int> agent_of(static_cast<size_t>(N)), mode_of(static_cast<size_t>(N));
  for (int r = 0; r < N; ++r) {
    agent_of[static_cast<size_t>(r)] = r % A;
    mode_of[static_cast<size_t>(r)] = r / A;
  }
  Var context = ad::gather_rows(apply(bind, dec.fuse, h_enc), index_of(std::move(agent_of)));
  Var time = apply(bind, dec.time, tape.constant(time_features(t, D)));
  Var z = ad::add(context, apply(bind, dec.state, tape.constant(state)));
  z = ad::add_row(z, time);
  z = ad::add(z, ad::gather_rows(bind(dec.modes), index_of(std::move(mode_of))));

  auto across_modes = ad::AttentionGroups::strided(A, K);
  for (const auto& b : dec.kk) z = apply(bind, b, z, across_modes);
  auto across_agents = ad::AttentionGroups::blocks(K, A);
  for (const auto& b : dec.layers) z = apply(bind, b, film_apply(z, film, A), across_agents);

  Var out = apply(bind, dec.out, z);
  return {apply(bind, dec.head, out), apply(bind, dec.logit, out)};
}

LossValue BiFlowModel::loss(Binder& bind, const TrainExample& ex, const FlowDraw& draw, const LossWeights& w,
                            Var* total) const {
  ad::Tape& tape = bind.tape();
  const int A = ex.history.agents();
  const int D = config_.latent_dim;
  const int K = static_cast<int>(draw.noise_future.rows()) / std::max(A, 1);
  if (draw.noise_future.rows() != static_cast<Eigen::Index>(K) * A) throw Error("loss: noise shape mismatch");

  Var h_future = encode(bind, ex.history, false);
  Var zero_film = tape.constant(Matrix::Zero(A, 2 * D));
  Var film_f = zero_film;
  if (config_.ablations.anchor) {
    Var agent = agent_anchor(bind, h_future);
    film_f = film(bind, agent, scene_anchor(bind, agent));
  }

  LossValue out;
  const Matrix y_t = interpolate(draw.noise_future, replicate_rows(ex.future, K), draw.t_future);
  auto [ft, fl] = decode(bind, Stream::future, h_future, y_t, draw.t_future, film_f, K);
  out.future = wta_loss(ft.value(), logits_grid(fl.value(), K, A), ex.future, K, w.per_agent, w.mode);
  out.pred = out.future.loss;
  Var sum = ad::scale(wta_node(ft, fl, out.future), w.pred);

  if (w.recon != 0.0) {
    Var h_history = config_.ablations.shared_encoder ? h_future : encode(bind, ex.history, true);
    const Matrix x_t = interpolate(draw.noise_history, replicate_rows(ex.past, K), draw.t_history);
    auto [ht, hl] = decode(bind, Stream::history, h_history, x_t, draw.t_history, zero_film, K);
    out.history = wta_loss(ht.value(), logits_grid(hl.value(), K, A), ex.past, K, w.per_agent, w.mode);
    out.recon = out.history.loss;
    sum = ad::add(sum, ad::scale(wta_node(ht, hl, out.history), w.recon));
  }
  out.total = sum.value()(0, 0);
  if (total) *total = sum;
  return out;
}

// ---------------------------------------------------------------- value API

EncoderOutput BiFlowModel::encode(const ObservedHistory& history) const {
  ad::Tape tape(false);
  Binder bind(tape, params_);
  return {encode(bind, history, false).value()};
}

AnchorPair BiFlowModel::ego_anchor(const EncoderOutput& enc) const {
  ad::Tape tape(false);
  Binder bind(tape, params_);
  Var agent = agent_anchor(bind, tape.constant(enc.h_enc));
  return {agent.value(), scene_anchor(bind, agent).value()};
}

Matrix BiFlowModel::scene_anchor(const Matrix& agent) const {
  ad::Tape tape(false);
  Binder bind(tape, params_);
  return scene_anchor(bind, tape.constant(agent)).value();
}

FilmParams BiFlowModel::film_params(const AnchorPair& anchors) const {
  ad::Tape tape(false);
  Binder bind(tape, params_);
  const Matrix bg = film(bind, tape.constant(anchors.agent), tape.constant(anchors.scene)).value();
  const auto D = bg.cols() / 2;
  return {bg.leftCols(D), bg.rightCols(D)};
}

CandidateSet BiFlowModel::decode(Stream stream, const EncoderOutput& enc, const Matrix& state, double t,
                                 const AnchorPair* anchors, int K) const {
  if (stream == Stream::future && anchors == nullptr) throw Error("decode: future stream requires anchors");
  const int A = static_cast<int>(enc.h_enc.rows());
  const int D = config_.latent_dim;
  Matrix film_m = Matrix::Zero(A, 2 * D);
  if (stream == Stream::future && config_.ablations.anchor) {
    FilmParams f = film_params(*anchors);
    film_m << f.beta, f.gamma;
  }
  ad::Tape tape(false);
  Binder bind(tape, params_);
  auto [traj, logits] = decode(bind, stream, tape.constant(enc.h_enc), state, t, tape.constant(film_m), K);
  CandidateSet c;
  c.K = K;
  c.A = A;
  c.T = stream == Stream::future ? config_.future_steps : config_.history_steps;
  c.trajectories = traj.value();
  c.logits = logits_grid(logits.value(), K, A);
  c.stream = stream;
  return c;
}

CandidateSet BiFlowModel::sample_future(const ObservedHistory& history, int K, std::span<const double> grid,
                                        Rng& rng) const {
  const EncoderOutput enc = encode(history);
  const AnchorPair anchors = ego_anchor(enc);
  const int A = history.agents();
  EndpointModel model = [&](const Matrix& state, double t) {
    return decode(Stream::future, enc, state, t, &anchors, K);
  };
  return euler_sample(model, K, A, config_.future_steps, grid, rng);
}

// ---------------------------------------------------------------- checkpoint

void save_checkpoint(const std::filesystem::path& path, const BiFlowModel& model, const CheckpointMeta& meta) {
  nlohmann::json header;
  header["config"] = model.config().to_json();
  header["fingerprint"] = config_fingerprint(header["config"]);
  header["data"] = meta.data;
  header["extra"] = meta.extra;
  header["params"] = nlohmann::json::array();
  for (const auto& p : model.params()) {
    header["params"].push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  }
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
    const uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : model.params()) {
      out.write(reinterpret_cast<const char*>(p.value.data()),
                static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    }
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

BiFlowModel load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta,
                            const std::string* expected_fingerprint) {
  if (!std::filesystem::exists(path)) throw MissingInput(path.string());
  std::ifstream in(path, std::ios::binary);
  char magic[8];
  uint32_t version = 0;
  uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw Error("not a checkpoint: " + path.string());
  if (version != kVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error("truncated checkpoint header: " + path.string());
  const auto header = nlohmann::json::parse(text);

  const std::string stored = header.at("fingerprint").get<std::string>();
  if (config_fingerprint(header.at("config")) != stored) throw Error("checkpoint header is corrupt");
  if (expected_fingerprint && *expected_fingerprint != stored) {
    throw ConfigError("checkpoint fingerprint " + stored + " does not match config " + *expected_fingerprint);
  }
  BiFlowModel model(ModelConfig::from_json(header.at("config")));
  const auto& listed = header.at("params");
  if (listed.size() != static_cast<size_t>(model.params().size())) throw Error("checkpoint parameter count differs");
  for (int i = 0; i < model.params().size(); ++i) {
    Param& p = model.params()[i];
    const auto& e = listed[static_cast<size_t>(i)];
    if (e.at("name") != p.name || e.at("rows") != p.value.rows() || e.at("cols") != p.value.cols()) {
      throw Error("checkpoint parameter " + p.name + " does not match");
    }
    in.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  if (!in) throw Error("truncated checkpoint: " + path.string());
  if (meta) {
    meta->fingerprint = stored;
    meta->data = header.value("data", nlohmann::json::object());
    meta->extra = header.value("extra", nlohmann::json::object());
  }
  return model;
}

}  // namespace egoflow
