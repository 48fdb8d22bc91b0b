// Copyright 2026 The strokeseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "strokeseg/segresnet.hpp"

#include "strokeseg/errors.hpp"
#include "strokeseg/random.hpp"

namespace strokeseg::nn {

void NetworkConfig::validate() const {
  if (in_channels < 1) throw ValidationError("in_channels must be >= 1");
  if (out_channels < 1) throw ValidationError("out_channels must be >= 1");
  if (init_filters < 1) throw ValidationError("init_filters must be > 0");
  if (blocks_down.empty()) throw ValidationError("blocks_down must not be empty");
  if (blocks_down.size() > 16) throw ValidationError("blocks_down has too many levels");
  if (blocks_up.size() + 1 != blocks_down.size()) {
    throw ValidationError("len(blocks_up) must equal len(blocks_down) - 1");
  }
  for (int b : blocks_down) {
    if (b < 0) throw ValidationError("blocks_down entries must be >= 0");
  }
  for (int b : blocks_up) {
    if (b < 0) throw ValidationError("blocks_up entries must be >= 0");
  }
  if (ds_heads < 0 || ds_heads > static_cast<int>(blocks_up.size())) {
    throw ValidationError("ds_heads must lie in [0, len(blocks_up)]");
  }
}

template <typename T>
SegResNet<T>::SegResNet(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const int levels = cfg_.levels();
  stem_ = Conv3d<T>("stem", {cfg_.in_channels, cfg_.init_filters, 3, 1, false});
  encoder_.resize(static_cast<std::size_t>(levels));
  for (int s = 0; s < levels; ++s) {
    const std::string prefix = "encoder." + std::to_string(s);
    auto& lvl = encoder_[static_cast<std::size_t>(s)];
    if (s > 0) lvl.down = Conv3d<T>(prefix + ".down", {cfg_.width(s - 1), cfg_.width(s), 3, 2, false});
    for (int b = 0; b < cfg_.blocks_down[static_cast<std::size_t>(s)]; ++b) {
      lvl.blocks.push_back(make_block(prefix + ".blocks." + std::to_string(b), cfg_.width(s)));
    }
  }
  for (int j = 0; j < levels - 1; ++j) {
    const int level = levels - 2 - j;
    const std::string prefix = "decoder." + std::to_string(j);
    DecoderLevel step;
    step.level = level;
    step.reduce = Conv3d<T>(prefix + ".reduce", {cfg_.width(level + 1), cfg_.width(level), 1, 1, false});
    for (int b = 0; b < cfg_.blocks_up[static_cast<std::size_t>(j)]; ++b) {
      step.blocks.push_back(make_block(prefix + ".blocks." + std::to_string(b), cfg_.width(level)));
    }
    decoder_.push_back(std::move(step));
  }
  for (int i = 0; i <= cfg_.ds_heads; ++i) {
    Head h;
    h.level = i;
    h.conv = Conv3d<T>("heads." + std::to_string(i), {cfg_.width(i), cfg_.out_channels, 1, 1, true});
    heads_.push_back(std::move(h));
  }
  reinitialize(seed);
}

template <typename T>
typename SegResNet<T>::ResBlock SegResNet<T>::make_block(const std::string& name, int width) {
  ResBlock b;
  b.norm1 = InstanceNorm<T>(name + ".norm1", width);
  b.conv1 = Conv3d<T>(name + ".conv1", {width, width, 3, 1, false});
  b.norm2 = InstanceNorm<T>(name + ".norm2", width);
  b.conv2 = Conv3d<T>(name + ".conv2", {width, width, 3, 1, false});
  return b;
}

template <typename T>
void SegResNet<T>::reinitialize(std::uint64_t seed) {
  auto rng = make_stream(seed, StreamPurpose::WeightInit);
  stem_.init(rng);
  for (auto& lvl : encoder_) {
    if (lvl.down) lvl.down->init(rng);
    for (auto& b : lvl.blocks) {
      b.conv1.init(rng);
      b.conv2.init(rng);
    }
  }
  for (auto& step : decoder_) {
    step.reduce.init(rng);
    for (auto& b : step.blocks) {
      b.conv1.init(rng);
      b.conv2.init(rng);
    }
  }
  for (auto& h : heads_) h.conv.init(rng);
  for (Parameter<T>* p : parameters()) {
    const bool is_norm = p->name.find(".norm") != std::string::npos;
    if (is_norm) {
      const bool scale = p->name.ends_with(".weight");
      std::fill(p->value.begin(), p->value.end(), scale ? T(1) : T(0));
    }
    p->zero_grad();
  }
}

template <typename T>
std::vector<Parameter<T>*> SegResNet<T>::parameters() {
  std::vector<Parameter<T>*> out;
  auto add_conv = [&](Conv3d<T>& c) {
    out.push_back(&c.weight);
    if (c.bias) out.push_back(&*c.bias);
  };
  auto add_block = [&](ResBlock& b) {
    out.push_back(&b.norm1.gamma);
    out.push_back(&b.norm1.beta);
    add_conv(b.conv1);
    out.push_back(&b.norm2.gamma);
    out.push_back(&b.norm2.beta);
    add_conv(b.conv2);
  };
  add_conv(stem_);
  for (auto& lvl : encoder_) {
    if (lvl.down) add_conv(*lvl.down);
    for (auto& b : lvl.blocks) add_block(b);
  }
  for (auto& step : decoder_) {
    add_conv(step.reduce);
    for (auto& b : step.blocks) add_block(b);
  }
  for (auto& h : heads_) add_conv(h.conv);
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> SegResNet<T>::parameters() const {
  auto params = const_cast<SegResNet<T>*>(this)->parameters();
  return {params.begin(), params.end()};
}

template <typename T>
std::vector<ParameterInfo> SegResNet<T>::inventory() const {
  std::vector<ParameterInfo> out;
  for (const Parameter<T>* p : parameters()) out.push_back({p->name, p->shape});
  return out;
}

template <typename T>
std::int64_t SegResNet<T>::parameter_count() const {
  std::int64_t n = 0;
  for (const Parameter<T>* p : parameters()) n += static_cast<std::int64_t>(p->numel());
  return n;
}

template <typename T>
void SegResNet<T>::zero_grad() {
  for (Parameter<T>* p : parameters()) p->zero_grad();
}

template <typename T>
std::vector<int> SegResNet<T>::encoder_widths() const {
  std::vector<int> w;
  for (int s = 0; s < cfg_.levels(); ++s) w.push_back(cfg_.width(s));
  return w;
}

template <typename T>
std::vector<Extent3> SegResNet<T>::output_extents(const Extent3& input) const {
  const std::int64_t div = cfg_.divisor();
  static constexpr const char* kAxis[3] = {"x", "y", "z"};
  for (int a = 0; a < 3; ++a) {
    if (input[a] < 1 || input[a] % div != 0) {
      throw ShapeError("input size " + std::to_string(input[a]) + " along axis " + kAxis[a] +
                       " is not divisible by " + std::to_string(div));
    }
  }
  std::vector<Extent3> out;
  for (const Head& h : heads_) {
    const std::int64_t f = std::int64_t{1} << h.level;
    out.push_back({input.x / f, input.y / f, input.z / f});
  }
  return out;
}

template <typename T>
void SegResNet<T>::check_input(const Tensor<T>& x) const {
  if (x.channels != cfg_.in_channels) {
    throw ShapeError("network expects " + std::to_string(cfg_.in_channels) + " input channels, got " +
                     std::to_string(x.channels));
  }
  if (x.batch < 1) throw ShapeError("empty batch");
  output_extents(x.spatial);
}

template <typename T>
Tensor<T> SegResNet<T>::block_forward(ResBlock& b, Tensor<T> x, bool train) {
  if (train) {
    Tensor<T> t = b.norm1.forward(x, &b.stats1);
    relu_inplace(t);
    b.act1 = std::move(t);
    b.h1 = b.conv1.forward(b.act1);
    t = b.norm2.forward(b.h1, &b.stats2);
    relu_inplace(t);
    b.act2 = std::move(t);
    Tensor<T> out = b.conv2.forward(b.act2);
    add_inplace(out, x);
    b.in = std::move(x);
    return out;
  }
  Tensor<T> t = b.norm1.forward(x);
  relu_inplace(t);
  t = b.conv1.forward(t);
  t = b.norm2.forward(t);
  relu_inplace(t);
  t = b.conv2.forward(t);
  add_inplace(t, x);
  return t;
}

template <typename T>
Tensor<T> SegResNet<T>::block_backward(ResBlock& b, Tensor<T> dy) {
  Tensor<T> d = b.conv2.backward(b.act2, dy);
  relu_backward_inplace(b.act2, d);
  d = b.norm2.backward(b.h1, b.stats2, d);
  d = b.conv1.backward(b.act1, d);
  relu_backward_inplace(b.act1, d);
  d = b.norm1.backward(b.in, b.stats1, d);
  add_inplace(d, dy);
  return d;
}

template <typename T>
DeepSupervisionOutput<T> SegResNet<T>::forward(const Tensor<T>& x, Mode mode) {
  check_input(x);
  const bool train = mode == Mode::Train;
  const int levels = cfg_.levels();
  if (!train) release_cache();

  std::vector<Tensor<T>> skips(static_cast<std::size_t>(levels));
  Tensor<T> cur = stem_.forward(x);
  if (train) stem_in_ = x;
  for (int s = 0; s < levels; ++s) {
    auto& lvl = encoder_[static_cast<std::size_t>(s)];
    if (lvl.down) {
      Tensor<T> next = lvl.down->forward(cur);
      if (train) {
        lvl.down_in = std::move(cur);
      }
      cur = std::move(next);
    }
    for (auto& b : lvl.blocks) cur = block_forward(b, std::move(cur), train);
    if (s + 1 < levels) {
      skips[static_cast<std::size_t>(s)] = cur;
    }
  }

  DeepSupervisionOutput<T> logits(heads_.size());
  auto emit = [&](int level, const Tensor<T>& feat) {
    if (level < static_cast<int>(heads_.size())) {
      Head& h = heads_[static_cast<std::size_t>(level)];
      logits[static_cast<std::size_t>(level)] = h.conv.forward(feat);
      if (train) h.in = feat;
    }
  };
  emit(levels - 1, cur);
  for (auto& step : decoder_) {
    Tensor<T> reduced = step.reduce.forward(cur);
    step.reduced_extent = reduced.spatial;
    if (train) step.reduce_in = std::move(cur);
    cur = upsample2x(reduced);
    reduced = Tensor<T>();
    auto& skip = skips[static_cast<std::size_t>(step.level)];
    add_inplace(cur, skip);
    skip = Tensor<T>();
    for (auto& b : step.blocks) cur = block_forward(b, std::move(cur), train);
    emit(step.level, cur);
  }
  cached_ = train;
  return logits;
}

template <typename T>
Tensor<T> SegResNet<T>::backward(const DeepSupervisionOutput<T>& grad_logits) {
  if (!cached_) throw PreconditionError("backward() requires a preceding Train-mode forward()");
  if (grad_logits.size() != heads_.size()) {
    throw ShapeError("expected " + std::to_string(heads_.size()) + " logit gradients, got " +
                     std::to_string(grad_logits.size()));
  }
  const int levels = cfg_.levels();
  auto head_grad = [&](int level) {
    Head& h = heads_[static_cast<std::size_t>(level)];
    return h.conv.backward(h.in, grad_logits[static_cast<std::size_t>(level)]);
  };

  std::vector<Tensor<T>> dskip(static_cast<std::size_t>(levels));
  Tensor<T> d = head_grad(0);
  for (auto it = decoder_.rbegin(); it != decoder_.rend(); ++it) {
    DecoderLevel& step = *it;
    for (auto b = step.blocks.rbegin(); b != step.blocks.rend(); ++b) d = block_backward(*b, std::move(d));
    dskip[static_cast<std::size_t>(step.level)] = d;
    Tensor<T> dup = upsample2x_backward(d, step.reduced_extent);
    d = step.reduce.backward(step.reduce_in, dup);
    const int coarser = step.level + 1;
    if (coarser < static_cast<int>(heads_.size())) add_inplace(d, head_grad(coarser));
  }

  for (int s = levels - 1; s >= 0; --s) {
    auto& lvl = encoder_[static_cast<std::size_t>(s)];
    if (s + 1 < levels) add_inplace(d, dskip[static_cast<std::size_t>(s)]);
    for (auto b = lvl.blocks.rbegin(); b != lvl.blocks.rend(); ++b) d = block_backward(*b, std::move(d));
    if (lvl.down) d = lvl.down->backward(lvl.down_in, d);
  }
  return stem_.backward(stem_in_, d);
}

template <typename T>
void SegResNet<T>::release_cache() {
  auto clear_block = [](ResBlock& b) {
    b.in = b.act1 = b.h1 = b.act2 = Tensor<T>();
    b.stats1 = b.stats2 = NormStats();
  };
  stem_in_ = Tensor<T>();
  for (auto& lvl : encoder_) {
    lvl.down_in = Tensor<T>();
    for (auto& b : lvl.blocks) clear_block(b);
  }
  for (auto& step : decoder_) {
    step.reduce_in = Tensor<T>();
    for (auto& b : step.blocks) clear_block(b);
  }
  for (auto& h : heads_) h.in = Tensor<T>();
  cached_ = false;
}

template class SegResNet<float>;
template class SegResNet<double>;

}  // namespace strokeseg::nn
