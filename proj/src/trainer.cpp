#include "volcal/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "volcal/hash.hpp"
#include "volcal/rng.hpp"

namespace volcal {

namespace {

constexpr char kCheckpointMagic[8] = {'V', 'C', 'C', 'K', 'P', 'T', '0', '1'};

std::int64_t derived_seed(std::int64_t seed, std::uint64_t salt) {
  return static_cast<std::int64_t>(
      rng::splitmix64(static_cast<std::uint64_t>(seed) ^ salt));
}

constexpr std::uint64_t kPriceSalt = 0x7052494345ull;
constexpr std::uint64_t kVolSalt = 0x564F4C4E4554ull;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct LoopState {
  PriceSurfaceModel price;
  VolSurfaceModel vol;
  AdamState adam_price, adam_vol;
  rng::CounterStream sampler;
  double lr_multiplier = 1.0;
  std::int64_t iteration = 0;
};

struct Snapshot {
  ParamVector price_values, vol_values;
  AdamState adam_price, adam_vol;
  std::uint64_t sampler_counter = 0;
  std::int64_t iteration = 0;
  std::size_t trace_rows = 0;
};

Snapshot take_snapshot(const LoopState& s, std::size_t trace_rows) {
  return {s.price.params.values, s.vol.params.values, s.adam_price, s.adam_vol,
          s.sampler.counter(),   s.iteration,         trace_rows};
}

void restore_snapshot(const Snapshot& snap, LoopState& s, TrainTrace& trace) {
  s.price.params.values = snap.price_values;
  s.vol.params.values = snap.vol_values;
  s.adam_price = snap.adam_price;
  s.adam_vol = snap.adam_vol;
  s.sampler.set_counter(snap.sampler_counter);
  s.iteration = snap.iteration;
  trace.rows.resize(snap.trace_rows);
}

TrainResult run_loop(LoopState state, const std::vector<ScaledQuote>& quotes,
                     const TrainConfig& config, TrainTrace trace) {
  const bool train_vol = config.lambda_dup != 0.0;
  LossCoefficients coeffs{config.lambda_ini, config.lambda_arb,
                          config.lambda_dup};
  LossEvalOptions options;
  options.chunk = config.chunk;
  options.price_gradient = true;
  options.vol_gradient = train_vol;

  int rollbacks = 0;
  bool early_stopped = false;
  Snapshot snapshot = take_snapshot(state, trace.rows.size());
  std::vector<double> totals;

  while (state.iteration < config.max_iters) {
    auto t0 = std::chrono::steady_clock::now();
    double lr = lr_at(state.iteration, config) * state.lr_multiplier;

    CollocationBatch batch = sample_batch(config.m1, config.m2, state.sampler);
    LossEvaluation eval =
        evaluate_losses(state.price, state.vol, quotes, batch, coeffs, options);

    bool finite = std::isfinite(eval.losses.total) &&
                  eval.price_grad.allFinite() &&
                  (!train_vol || eval.vol_grad.allFinite());
    if (!finite) {
      if (rollbacks >= 1)
        fail(ErrorCode::DivergedTraining,
             "non-finite loss recurred after rollback at iteration " +
                 std::to_string(state.iteration));
      restore_snapshot(snapshot, state, trace);
      totals.resize(static_cast<std::size_t>(trace.rows.size()));
      state.lr_multiplier *= 0.5;
      ++rollbacks;
      continue;
    }

    optimizer_step(state.price.params.values, eval.price_grad,
                   state.adam_price, lr);
    if (train_vol)
      optimizer_step(state.vol.params.values, eval.vol_grad, state.adam_vol, lr);

    double wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    trace.rows.push_back({state.iteration, lr, eval.losses.fit,
                          eval.losses.ini, eval.losses.arb, eval.losses.dup,
                          eval.losses.total, wall_ms});
    totals.push_back(eval.losses.total);
    ++state.iteration;

    if (config.checkpoint_every > 0 &&
        state.iteration % config.checkpoint_every == 0)
      snapshot = take_snapshot(state, trace.rows.size());

    if (config.early_stop && config.early_stop_window > 0 &&
        state.iteration % config.early_stop_window == 0 &&
        static_cast<std::int64_t>(totals.size()) >= 2 * config.early_stop_window) {
      auto w = static_cast<std::size_t>(config.early_stop_window);
      double cur = 0.0, prev = 0.0;
      for (std::size_t i = totals.size() - w; i < totals.size(); ++i)
        cur += totals[i];
      for (std::size_t i = totals.size() - 2 * w; i < totals.size() - w; ++i)
        prev += totals[i];
      cur /= static_cast<double>(w);
      prev /= static_cast<double>(w);
      if (prev > 0.0 && (prev - cur) < config.early_stop_rel * prev) {
        early_stopped = true;
        break;
      }
    }
  }

  TrainResult result{std::move(state.price), std::move(state.vol),
                     std::move(trace),       std::move(state.adam_price),
                     std::move(state.adam_vol), state.sampler.counter(),
                     state.lr_multiplier,    state.iteration,
                     early_stopped,          rollbacks};
  return result;
}

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) fail(ErrorCode::Io, "unexpected end of checkpoint stream");
  return v;
}

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Eigen::VectorXd read_vector(std::istream& in) {
  auto n = static_cast<Eigen::Index>(read_pod<std::uint64_t>(in));
  Eigen::VectorXd v(n);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) fail(ErrorCode::Io, "truncated checkpoint stream");
  return v;
}

void write_train_config(std::ostream& out, const TrainConfig& c) {
  write_pod<std::int64_t>(out, c.m1);
  write_pod<std::int64_t>(out, c.m2);
  write_pod<double>(out, c.lambda_ini);
  write_pod<double>(out, c.lambda_arb);
  write_pod<double>(out, c.lambda_dup);
  write_pod<std::int64_t>(out, c.max_iters);
  write_pod<double>(out, c.lr0);
  write_pod<double>(out, c.lr_decay);
  write_pod<std::int64_t>(out, c.lr_interval);
  write_pod<std::int64_t>(out, c.seed);
  write_pod<std::int64_t>(out, c.checkpoint_every);
  write_pod<std::int32_t>(out, c.net.blocks);
  write_pod<std::int32_t>(out, c.net.width);
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(c.net.hidden_activation));
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(c.net.output_activation));
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(c.net.normalization));
  write_pod<std::int32_t>(out, c.chunk);
  write_pod<std::uint8_t>(out, c.early_stop ? 1 : 0);
  write_pod<std::int64_t>(out, c.early_stop_window);
  write_pod<double>(out, c.early_stop_rel);
}

TrainConfig read_train_config(std::istream& in) {
  TrainConfig c;
  c.m1 = static_cast<int>(read_pod<std::int64_t>(in));
  c.m2 = static_cast<int>(read_pod<std::int64_t>(in));
  c.lambda_ini = read_pod<double>(in);
  c.lambda_arb = read_pod<double>(in);
  c.lambda_dup = read_pod<double>(in);
  c.max_iters = read_pod<std::int64_t>(in);
  c.lr0 = read_pod<double>(in);
  c.lr_decay = read_pod<double>(in);
  c.lr_interval = read_pod<std::int64_t>(in);
  c.seed = read_pod<std::int64_t>(in);
  c.checkpoint_every = read_pod<std::int64_t>(in);
  c.net.blocks = read_pod<std::int32_t>(in);
  c.net.width = read_pod<std::int32_t>(in);
  c.net.hidden_activation = static_cast<HiddenActivation>(read_pod<std::uint8_t>(in));
  c.net.output_activation = static_cast<OutputActivation>(read_pod<std::uint8_t>(in));
  c.net.normalization = static_cast<Normalization>(read_pod<std::uint8_t>(in));
  c.chunk = read_pod<std::int32_t>(in);
  c.early_stop = read_pod<std::uint8_t>(in) != 0;
  c.early_stop_window = read_pod<std::int64_t>(in);
  c.early_stop_rel = read_pod<double>(in);
  return c;
}

}  // namespace

void TrainConfig::validate() const {
  net.validate();
  if (m1 < 1 || m2 < 1) fail(ErrorCode::DomainError, "M1, M2 must be >= 1");
  if (max_iters < 0) fail(ErrorCode::DomainError, "max_iters must be >= 0");
  if (!(lr0 > 0.0)) fail(ErrorCode::DomainError, "lr0 must be positive");
  if (!(lr_decay > 0.0)) fail(ErrorCode::DomainError, "lr_decay must be positive");
  if (lr_interval < 1) fail(ErrorCode::DomainError, "lr_interval must be >= 1");
  if (chunk < 1) fail(ErrorCode::DomainError, "chunk must be >= 1");
}

std::string TrainConfig::canonical_text() const {
  std::string s;
  auto add = [&s](const char* key, const std::string& value) {
    s += key;
    s += '=';
    s += value;
    s += '\n';
  };
  add("m1", std::to_string(m1));
  add("m2", std::to_string(m2));
  add("lambda_ini", format_double(lambda_ini));
  add("lambda_arb", format_double(lambda_arb));
  add("lambda_dup", format_double(lambda_dup));
  add("max_iters", std::to_string(max_iters));
  add("lr0", format_double(lr0));
  add("lr_decay", format_double(lr_decay));
  add("lr_interval", std::to_string(lr_interval));
  add("seed", std::to_string(seed));
  add("checkpoint_every", std::to_string(checkpoint_every));
  add("net.blocks", std::to_string(net.blocks));
  add("net.width", std::to_string(net.width));
  add("net.normalization",
      std::to_string(static_cast<int>(net.normalization)));
  add("chunk", std::to_string(chunk));
  add("early_stop", early_stop ? "1" : "0");
  add("early_stop_window", std::to_string(early_stop_window));
  add("early_stop_rel", format_double(early_stop_rel));
  return s;
}

std::uint64_t TrainConfig::hash() const { return fnv1a(canonical_text()); }

double lr_at(std::int64_t iter, const TrainConfig& config) {
  if (iter < 0) fail(ErrorCode::DomainError, "lr_at: negative iteration");
  auto steps = static_cast<double>(iter / config.lr_interval);
  return config.lr0 / std::pow(config.lr_decay, steps);
}

void optimizer_step(ParamVector& params, const Eigen::VectorXd& grad,
                    AdamState& state, double lr) {
  auto n = static_cast<Eigen::Index>(params.size());
  if (grad.size() != n || state.m.size() != n || state.v.size() != n)
    fail(ErrorCode::DomainError, "optimizer_step: shape mismatch");
  ++state.t;
  state.m = AdamState::kBeta1 * state.m + (1.0 - AdamState::kBeta1) * grad;
  state.v = AdamState::kBeta2 * state.v.array().matrix() +
            (1.0 - AdamState::kBeta2) * grad.array().square().matrix();
  double c1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(state.t));
  double c2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(state.t));
  Eigen::Map<Eigen::VectorXd> p(params.data(), n);
  p.array() -= lr * (state.m.array() / c1) /
               ((state.v.array() / c2).sqrt() + AdamState::kEpsilon);
}

TrainResult train(const std::vector<ScaledQuote>& quotes,
                  const MarketFrame& frame, const TrainConfig& config) {
  config.validate();
  frame.validate();
  if (quotes.empty()) fail(ErrorCode::EmptyInput, "train: no quotes");

  LoopState state{
      make_price_model(init_params(config.net, derived_seed(config.seed, kPriceSalt)),
                       frame),
      make_vol_model(init_params(config.net, derived_seed(config.seed, kVolSalt)),
                     frame),
      AdamState::zero(ParamLayout::make(config.net).total),
      AdamState::zero(ParamLayout::make(config.net).total),
      rng::CounterStream(static_cast<std::uint64_t>(config.seed),
                         rng::StreamTag::CollocationSampler),
      1.0,
      0};
  return run_loop(std::move(state), quotes, config, TrainTrace{});
}

TrainResult train_from(const Checkpoint& start,
                       const std::vector<ScaledQuote>& quotes) {
  start.config.validate();
  if (quotes.empty()) fail(ErrorCode::EmptyInput, "train_from: no quotes");
  LoopState state{make_price_model(start.price_params, start.frame),
                  make_vol_model(start.vol_params, start.frame),
                  start.adam_price,
                  start.adam_vol,
                  rng::CounterStream(static_cast<std::uint64_t>(start.config.seed),
                                     rng::StreamTag::CollocationSampler),
                  start.lr_multiplier,
                  start.iteration};
  state.sampler.set_counter(start.sampler_counter);
  return run_loop(std::move(state), quotes, start.config, TrainTrace{});
}

Checkpoint make_checkpoint(const TrainResult& result, const TrainConfig& config,
                           const MarketFrame& frame) {
  Checkpoint c;
  c.config = config;
  c.frame = frame;
  c.iteration = result.iterations;
  c.price_params = result.price.params;
  c.vol_params = result.vol.params;
  c.adam_price = result.adam_price;
  c.adam_vol = result.adam_vol;
  c.sampler_counter = result.sampler_counter;
  c.lr_multiplier = result.lr_multiplier;
  c.config_hash = config.hash();
  return c;
}

void checkpoint_save(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot open " + path + " for writing");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod<std::uint32_t>(out, checkpoint.version);
  write_train_config(out, checkpoint.config);
  write_pod<double>(out, checkpoint.frame.spot);
  write_pod<double>(out, checkpoint.frame.rate);
  write_pod<double>(out, checkpoint.frame.k_max);
  write_pod<double>(out, checkpoint.frame.t_max);
  write_pod<std::uint8_t>(out, checkpoint.frame.kind == OptionKind::Call ? 0 : 1);
  write_pod<std::int64_t>(out, checkpoint.iteration);
  write_params(out, checkpoint.price_params);
  write_params(out, checkpoint.vol_params);
  for (const AdamState* adam : {&checkpoint.adam_price, &checkpoint.adam_vol}) {
    write_pod<std::int64_t>(out, adam->t);
    write_vector(out, adam->m);
    write_vector(out, adam->v);
  }
  write_pod<std::uint64_t>(out, checkpoint.sampler_counter);
  write_pod<double>(out, checkpoint.lr_multiplier);
  write_pod<std::uint64_t>(out, checkpoint.config_hash);
  if (!out) fail(ErrorCode::Io, "failed to write checkpoint " + path);
}

Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    fail(ErrorCode::VersionMismatch, "bad checkpoint header in " + path);
  Checkpoint c;
  c.version = read_pod<std::uint32_t>(in);
  if (c.version != 1u)
    fail(ErrorCode::VersionMismatch, "unsupported checkpoint version");
  c.config = read_train_config(in);
  c.frame.spot = read_pod<double>(in);
  c.frame.rate = read_pod<double>(in);
  c.frame.k_max = read_pod<double>(in);
  c.frame.t_max = read_pod<double>(in);
  c.frame.kind = read_pod<std::uint8_t>(in) == 0 ? OptionKind::Call : OptionKind::Put;
  c.iteration = read_pod<std::int64_t>(in);
  c.price_params = read_params(in);
  c.vol_params = read_params(in);
  for (AdamState* adam : {&c.adam_price, &c.adam_vol}) {
    adam->t = read_pod<std::int64_t>(in);
    adam->m = read_vector(in);
    adam->v = read_vector(in);
  }
  c.sampler_counter = read_pod<std::uint64_t>(in);
  c.lr_multiplier = read_pod<double>(in);
  c.config_hash = read_pod<std::uint64_t>(in);
  return c;
}

Checkpoint checkpoint_load(const std::string& path, const NetConfig& expected) {
  Checkpoint c = checkpoint_load(path);
  if (!(c.config.net == expected))
    fail(ErrorCode::VersionMismatch,
         "checkpoint architecture does not match the expected NetConfig");
  return c;
}

}  // namespace volcal
