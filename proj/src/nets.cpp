#include "vsd/nets.hpp"

#include <cmath>
#include <random>

namespace vsd {

void UNetConfig::validate() const {
  if (levels < 1) throw ConfigError("unet: levels must be >= 1");
  if (base_channels < 1) throw ConfigError("unet: base_channels must be >= 1");
  if (channel_cap < base_channels) {
    throw ConfigError("unet: channel_cap below base_channels");
  }
  if (in_channels < 1 || out_channels < 1) {
    throw ConfigError("unet: channel counts must be >= 1");
  }
  if (head == OutputHead::kDepth) {
    if (out_channels != 1) {
      throw ConfigError("unet: depth head requires out_channels == 1");
    }
    if (!(max_depth > 0.0)) {
      throw ConfigError("unet: depth head requires positive max_depth");
    }
  }
  if (head == OutputHead::kRgb && out_channels != 3) {
    throw ConfigError("unet: rgb head requires out_channels == 3");
  }
}

int UNetConfig::stage_channels(int stage) const {
  long c = long(base_channels) << (stage - 1);
  return int(std::min(c, long(channel_cap)));
}

int UNetConfig::bottleneck_channels() const {
  long c = long(base_channels) << levels;
  return int(std::min(c, long(channel_cap)));
}

UNetConfig UNetConfig::reference_square_depth() {
  UNetConfig cfg;
  cfg.levels = 7;
  cfg.base_channels = 16;
  cfg.channel_cap = 1024;
  cfg.head = OutputHead::kDepth;
  cfg.out_channels = 1;
  cfg.max_depth = 80.0;
  return cfg;
}

UNetConfig UNetConfig::reference_wide_depth() {
  UNetConfig cfg = reference_square_depth();
  cfg.channel_cap = 512;
  return cfg;
}

UNetConfig UNetConfig::desk_depth(double max_depth) {
  UNetConfig cfg;
  cfg.levels = 3;
  cfg.base_channels = 8;
  cfg.head = OutputHead::kDepth;
  cfg.out_channels = 1;
  cfg.max_depth = max_depth;
  return cfg;
}

UNetConfig UNetConfig::desk_rgb(int in_channels) {
  UNetConfig cfg;
  cfg.levels = 3;
  cfg.base_channels = 8;
  cfg.head = OutputHead::kRgb;
  cfg.in_channels = in_channels;
  cfg.out_channels = 3;
  return cfg;
}

ShapeSchedule shape_schedule(const UNetConfig& cfg, int h, int w) {
  cfg.validate();
  ShapeSchedule sched;
  int ch = h, cw = w;
  for (int i = 1; i <= cfg.levels + 1; ++i) {
    if (ch % 2 != 0 || cw % 2 != 0) {
      throw ConfigError("unet: input " + std::to_string(h) + "x" +
                        std::to_string(w) + " not divisible by 2^" +
                        std::to_string(cfg.levels + 1));
    }
    ch /= 2;
    cw /= 2;
    if (i <= cfg.levels) {
      sched.encoder.push_back({cfg.stage_channels(i), ch, cw});
    } else {
      sched.bottleneck = {cfg.bottleneck_channels(), ch, cw};
    }
  }
  sched.output = {cfg.out_channels, h, w};
  return sched;
}

namespace {

// Walks the conv stack in forward order. The same walk drives parameter
// counting, initialization, and the forward pass, so they cannot drift.
template <typename Visit>
void for_each_conv(const UNetConfig& cfg, Visit&& visit) {
  int prev = cfg.in_channels;
  for (int i = 1; i <= cfg.levels; ++i) {
    const int c = cfg.stage_channels(i);
    visit("enc" + std::to_string(i) + ".conv1", prev, c);
    visit("enc" + std::to_string(i) + ".conv2", c, c);
    prev = c;
  }
  const int cb = cfg.bottleneck_channels();
  visit("bottleneck.conv1", prev, cb);
  visit("bottleneck.conv2", cb, cb);
  prev = cb;
  for (int i = cfg.levels; i >= 1; --i) {
    const int c = cfg.stage_channels(i);
    visit("dec" + std::to_string(i) + ".conv1", prev, c);
    visit("dec" + std::to_string(i) + ".conv2", 2 * c, c);
    prev = c;
  }
  visit("head.conv1", prev, prev);
  visit("head.conv2", prev, cfg.out_channels);
}

}  // namespace

long unet_parameter_count(const UNetConfig& cfg) {
  cfg.validate();
  long total = 0;
  for_each_conv(cfg, [&](const std::string&, int cin, int cout) {
    total += long(cout) * cin * 9 + cout;
  });
  return total;
}

template <typename T>
long Network<T>::value_count() const {
  long total = 0;
  for (const auto& p : params) total += long(p.values.size());
  return total;
}

template <typename T>
Network<T> build_unet(const UNetConfig& cfg, uint64_t seed) {
  cfg.validate();
  Network<T> net;
  net.config = cfg;
  std::mt19937_64 rng(seed);
  for_each_conv(cfg, [&](const std::string& name, int cin, int cout) {
    Parameter<T> w;
    w.name = name + ".weight";
    w.shape = {cout, cin, 3, 3};
    w.values.resize(size_t(w.shape.numel()));
    const double limit = std::sqrt(6.0 / (double(cin) * 9.0));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (T& v : w.values) v = T(dist(rng));
    net.params.push_back(std::move(w));

    Parameter<T> b;
    b.name = name + ".bias";
    b.shape = {1, cout, 1, 1};
    b.values.assign(size_t(cout), T(0));
    net.params.push_back(std::move(b));
  });
  return net;
}

template <typename T>
BoundNet<T> bind(Tape<T>& tape, const Network<T>& net) {
  BoundNet<T> bound;
  bound.net = &net;
  bound.leaves.reserve(net.params.size());
  for (const auto& p : net.params) {
    bound.leaves.push_back(
        tape.leaf(p.shape, {p.values.data(), p.values.size()}, p.name));
  }
  return bound;
}

template <typename T>
Tensor<T> unet_forward(const BoundNet<T>& bound, const Tensor<T>& input) {
  const UNetConfig& cfg = bound.net->config;
  cfg.validate();
  const Shape s = input.shape();
  if (s.c != cfg.in_channels) {
    throw ConfigError("unet: input has " + std::to_string(s.c) +
                      " channels, config expects " +
                      std::to_string(cfg.in_channels));
  }
  shape_schedule(cfg, s.h, s.w);  // validates divisibility
  if (bound.leaves.size() != bound.net->params.size()) {
    throw ContractError("unet: bound leaves out of sync with parameters");
  }
  bound.net->forward_count += 1;

  size_t cursor = 0;
  auto next_conv = [&](const Tensor<T>& x, int stride) {
    const Tensor<T>& w = bound.leaves[cursor];
    const Tensor<T>& b = bound.leaves[cursor + 1];
    cursor += 2;
    return conv2d(x, w, b, stride, 1);
  };

  std::vector<Tensor<T>> skips;
  Tensor<T> x = input;
  for (int i = 1; i <= cfg.levels; ++i) {
    x = leaky_relu(next_conv(x, 2), 0.2);
    x = leaky_relu(next_conv(x, 1), 0.2);
    skips.push_back(x);
  }
  x = leaky_relu(next_conv(x, 2), 0.2);
  x = leaky_relu(next_conv(x, 1), 0.2);
  for (int i = cfg.levels; i >= 1; --i) {
    x = upsample_nearest2x(x);
    x = relu(next_conv(x, 1));
    x = concat_channels(skips[i - 1], x);  // encoder block first
    x = relu(next_conv(x, 1));
  }
  x = upsample_nearest2x(x);
  x = relu(next_conv(x, 1));
  x = next_conv(x, 1);  // logits
  if (cursor != bound.leaves.size()) {
    throw ContractError("unet: parameter walk out of sync");
  }
  if (cfg.head == OutputHead::kDepth) {
    return scale_shift(sigmoid(x), cfg.max_depth - kDepthFloor, kDepthFloor);
  }
  return sigmoid(x);
}

template <typename T>
Tensor<T> depnet_forward(const BoundNet<T>& bound, const Tensor<T>& rgb) {
  if (bound.net->config.head != OutputHead::kDepth) {
    throw ContractError("depnet_forward: network head is not depth");
  }
  return unet_forward(bound, rgb);
}

template <typename T>
Tensor<T> synnet_forward(const BoundNet<T>& bound, const Tensor<T>& warped) {
  if (bound.net->config.head != OutputHead::kRgb) {
    throw ContractError("synnet_forward: network head is not rgb");
  }
  return unet_forward(bound, warped);
}

#define VSD_INSTANTIATE(T)                                           \
  template struct Network<T>;                                        \
  template Network<T> build_unet(const UNetConfig&, uint64_t);       \
  template BoundNet<T> bind(Tape<T>&, const Network<T>&);            \
  template Tensor<T> unet_forward(const BoundNet<T>&,                \
                                  const Tensor<T>&);                 \
  template Tensor<T> depnet_forward(const BoundNet<T>&,              \
                                    const Tensor<T>&);               \
  template Tensor<T> synnet_forward(const BoundNet<T>&,              \
                                    const Tensor<T>&);

VSD_INSTANTIATE(float)
VSD_INSTANTIATE(double)

#undef VSD_INSTANTIATE

}  // namespace vsd
