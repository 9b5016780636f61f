#include "volcal/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "volcal/rng.hpp"

namespace volcal {

void NetConfig::validate() const {
  if (blocks < 1) fail(ErrorCode::DomainError, "NetConfig: blocks >= 1");
  if (width < 1) fail(ErrorCode::DomainError, "NetConfig: width >= 1");
}

ParamLayout ParamLayout::make(const NetConfig& config) {
  config.validate();
  ParamLayout l;
  l.width = config.width;
  l.blocks = config.blocks;
  l.affine = config.normalization == Normalization::PerLayerAffine;
  const int w = config.width;
  int off = 0;
  auto take = [&off](int n) {
    int at = off;
    off += n;
    return at;
  };
  auto take_affine = [&](Affine& a) {
    if (!l.affine) return;
    a.scale = take(w);
    a.shift = take(w);
  };

  l.lift_w = take(2 * w);
  l.lift_b = take(w);
  take_affine(l.lift_a);
  l.block.resize(static_cast<std::size_t>(config.blocks));
  for (auto& blk : l.block) {
    blk.w1 = take(w * w);
    blk.b1 = take(w);
    take_affine(blk.a1);
    blk.w2 = take(w * w);
    blk.b2 = take(w);
    take_affine(blk.a2);
  }
  l.head_w = take(w);
  l.head_b = take(1);
  l.total = off;
  return l;
}

bool NetParams::finite() const {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

NetParams init_params(const NetConfig& config, std::int64_t seed) {
  ParamLayout layout = ParamLayout::make(config);
  NetParams params;
  params.config = config;
  params.seed = seed;
  params.values.assign(static_cast<std::size_t>(layout.total), 0.0);

  rng::CounterStream stream(static_cast<std::uint64_t>(seed),
                            rng::StreamTag::ParamInit);
  auto fill_uniform = [&](int offset, int count, double bound) {
    for (int i = 0; i < count; ++i)
      params.values[static_cast<std::size_t>(offset + i)] =
          stream.next_uniform(-bound, bound);
  };
  auto fill_const = [&](int offset, int count, double value) {
    if (offset < 0) return;
    for (int i = 0; i < count; ++i)
      params.values[static_cast<std::size_t>(offset + i)] = value;
  };

  const int w = config.width;
  fill_uniform(layout.lift_w, 2 * w, std::sqrt(6.0 / (2 + w)));
  fill_const(layout.lift_a.scale, w, 1.0);
  double bound_block = std::sqrt(6.0 / (w + w));
  for (const auto& blk : layout.block) {
    fill_uniform(blk.w1, w * w, bound_block);
    fill_const(blk.a1.scale, w, 1.0);
    fill_uniform(blk.w2, w * w, bound_block);
    fill_const(blk.a2.scale, w, 1.0);
  }
  fill_uniform(layout.head_w, w, std::sqrt(6.0 / (w + 1)));
  return params;
}

PriceSurfaceModel make_price_model(NetParams params, const MarketFrame& frame) {
  frame.validate();
  return {std::move(params), frame, frame.kind};
}

VolSurfaceModel make_vol_model(NetParams params, const MarketFrame& frame) {
  frame.validate();
  return {std::move(params), frame};
}

double net_forward(const NetParams& params, double k, double t) {
  if (!params.finite())
    fail(ErrorCode::NonFiniteParams, "net_forward: non-finite parameters");
  ParamLayout layout = params.layout();
  return net_value<double>(params.config, layout,
                           std::span<const double>(params.values), k, t);
}

SurfaceJet price_jet(const PriceSurfaceModel& model, double k, double t) {
  ParamLayout layout = model.params.layout();
  Jet<double> j = model_price_jet<double>(
      model.params.config, layout, std::span<const double>(model.params.values),
      model.frame, model.kind, k, t);
  return {j.v, j.dt, j.dk, j.dkk};
}

double price_value(const PriceSurfaceModel& model, double k, double t) {
  ParamLayout layout = model.params.layout();
  double n = net_value<double>(model.params.config, layout,
                               std::span<const double>(model.params.values), k, t);
  const MarketFrame& f = model.frame;
  if (model.kind == OptionKind::Call)
    return f.spot * -std::expm1(-(1.0 - k) * n);
  return f.k_max * std::exp(f.rate * f.t_max * t) * k * -std::expm1(-k * n);
}

double eta_eval(const VolSurfaceModel& model, double k, double t) {
  ParamLayout layout = model.params.layout();
  return net_value<double>(model.params.config, layout,
                           std::span<const double>(model.params.values), k, t);
}

std::vector<double> param_gradient(const TapeLoss& loss,
                                   const NetParams& params) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  vars.reserve(params.values.size());
  for (double v : params.values) vars.push_back(tape.leaf(v));

  ad::Var out = loss(tape, std::span<const ad::Var>(vars));
  if (!std::isfinite(out.val))
    fail(ErrorCode::NonFiniteGradient, "param_gradient: loss is not finite");

  std::vector<double> adj = tape.gradient(out);
  std::vector<double> grad(params.values.size(), 0.0);
  for (std::size_t i = 0; i < vars.size(); ++i) {
    double g = adj[static_cast<std::size_t>(vars[i].idx)];
    if (!std::isfinite(g))
      fail(ErrorCode::NonFiniteGradient, "param_gradient: non-finite gradient");
    grad[i] = g;
  }
  return grad;
}

// --- serialization ----------------------------------------------------------

namespace {

constexpr char kParamMagic[8] = {'V', 'C', 'P', 'A', 'R', 'A', 'M', '1'};

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) fail(ErrorCode::Io, "unexpected end of parameter stream");
  return v;
}

}  // namespace

void write_params(std::ostream& out, const NetParams& params) {
  out.write(kParamMagic, sizeof(kParamMagic));
  write_pod<std::uint32_t>(out, 1u);  // format version
  write_pod<std::int32_t>(out, params.config.blocks);
  write_pod<std::int32_t>(out, params.config.width);
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(params.config.hidden_activation));
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(params.config.output_activation));
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(params.config.normalization));
  write_pod<std::int64_t>(out, params.seed);
  write_pod<std::uint64_t>(out, params.values.size());
  out.write(reinterpret_cast<const char*>(params.values.data()),
            static_cast<std::streamsize>(params.values.size() * sizeof(double)));
  if (!out) fail(ErrorCode::Io, "failed to write parameters");
}

NetParams read_params(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kParamMagic, sizeof(magic)) != 0)
    fail(ErrorCode::VersionMismatch, "bad parameter header");
  std::uint32_t version = read_pod<std::uint32_t>(in);
  if (version != 1u)
    fail(ErrorCode::VersionMismatch, "unsupported parameter format version");

  NetParams params;
  params.config.blocks = read_pod<std::int32_t>(in);
  params.config.width = read_pod<std::int32_t>(in);
  params.config.hidden_activation =
      static_cast<HiddenActivation>(read_pod<std::uint8_t>(in));
  params.config.output_activation =
      static_cast<OutputActivation>(read_pod<std::uint8_t>(in));
  params.config.normalization =
      static_cast<Normalization>(read_pod<std::uint8_t>(in));
  params.seed = read_pod<std::int64_t>(in);
  std::uint64_t count = read_pod<std::uint64_t>(in);

  ParamLayout layout = ParamLayout::make(params.config);
  if (count != static_cast<std::uint64_t>(layout.total))
    fail(ErrorCode::VersionMismatch,
         "parameter count does not match the layout descriptor");
  params.values.resize(count);
  in.read(reinterpret_cast<char*>(params.values.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) fail(ErrorCode::Io, "truncated parameter stream");
  return params;
}

void save_params(const std::string& path, const NetParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot open " + path + " for writing");
  write_params(out, params);
}

NetParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  return read_params(in);
}

}  // namespace volcal
