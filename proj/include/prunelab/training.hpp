#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "prunelab/dataset.hpp"
#include "prunelab/engine.hpp"
#include "prunelab/error.hpp"
#include "prunelab/mask.hpp"
#include "prunelab/models.hpp"
#include "prunelab/rng.hpp"

namespace prunelab {

// Defaults are the reference schedule (lr 0.1, batch 64, x0.1 at 1/2 and 3/4,
// weight decay 1e-4) with the epoch count shrunk for toy runs.
struct TrainConfig {
  int epochs = 40;
  std::size_t batch_size = 64;
  double initial_lr = 0.1;
  double lr_drop_factor = 0.1;
  std::vector<double> lr_drop_points = {0.5, 0.75};
  double weight_decay = 1e-4;
  double momentum = 0.9;
  RngSeed seed = 0;

  void validate() const {
    require(epochs >= 0, ErrorKind::domain, "epochs must be nonnegative");
    require(batch_size > 0, ErrorKind::domain, "batch size must be positive");
    require(initial_lr > 0.0 && lr_drop_factor > 0.0, ErrorKind::domain,
            "learning rate and drop factor must be positive");
    require(weight_decay >= 0.0 && momentum >= 0.0 && momentum < 1.0, ErrorKind::domain,
            "weight decay must be >= 0 and momentum in [0, 1)");
    for (std::size_t i = 0; i < lr_drop_points.size(); ++i) {
      require(lr_drop_points[i] > 0.0 && lr_drop_points[i] < 1.0, ErrorKind::domain,
              "drop points must lie in (0, 1)");
      require(i == 0 || lr_drop_points[i] > lr_drop_points[i - 1], ErrorKind::domain,
              "drop points must be strictly increasing");
    }
  }

  // initial_lr * factor^(number of drop points passed at `epoch`).
  double lr_at(int epoch) const {
    double lr = initial_lr;
    for (double point : lr_drop_points)
      if (static_cast<double>(epoch) >= point * static_cast<double>(epochs)) lr *= lr_drop_factor;
    return lr;
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct Checkpoint {
  int epoch = 0;
  LayeredParams weights;
  std::string rng_state;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TrainResult {
  LayeredParams params;
  std::vector<EpochStats> history;
  std::vector<Checkpoint> checkpoints;

  double best_test_accuracy() const {
    double best = 0.0;
    for (const auto& e : history) best = std::max(best, e.test_accuracy);
    return best;
  }

  const Checkpoint* checkpoint_at(int epoch) const {
    for (const auto& c : checkpoints)
      if (c.epoch == epoch) return &c;
    return nullptr;
  }
};

struct TrainOptions {
  std::set<int> checkpoint_epochs;
  // Retraining epoch t uses the schedule's rate at epoch min(offset + t, epochs).
  int schedule_offset = 0;
};

// Masked SGD with momentum and weight decay. Mask-0 weights are never
// touched, so they keep their incoming values bit-for-bit.
inline TrainResult train(const LayeredParams& params, const Mask& mask, const DataSplit& data,
                         const TrainConfig& cfg, const TrainOptions& options = {}) {
  cfg.validate();
  params.validate();
  data.train.validate();
  require_aligned(mask, params.sizes(), "train");
  require(!data.train.empty(), ErrorKind::domain, "training set is empty");
  for (int e : options.checkpoint_epochs)
    require(e >= 0 && e <= cfg.epochs, ErrorKind::domain,
            "checkpoint epoch " + std::to_string(e) + " outside [0, epochs]");

  TrainResult result;
  result.params = params;
  LayeredParams& w = result.params;
  LayerVectors velocity;
  for (const auto& l : w.weights) velocity.emplace_back(l.size(), 0.0);
  Rng rng(derive_seed(cfg.seed, "train"));

  auto snapshot = [&](int epoch) {
    if (options.checkpoint_epochs.count(epoch))
      result.checkpoints.push_back({epoch, w, rng.state()});
  };
  snapshot(0);

  const std::size_t n = data.train.size();
  std::vector<std::size_t> order(n);
  std::vector<std::size_t> batch_idx;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(std::min(options.schedule_offset + epoch, cfg.epochs));
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      batch_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Dataset batch = data.train.subset(batch_idx);
      ForwardPass pass = detail::record_loss(w, mask, batch, LossHead::softmax_cross_entropy);
      if (!std::isfinite(pass.loss))
        throw TrainingDiverged(epoch, "training diverged at epoch " + std::to_string(epoch));
      const LayerVectors grad = backward(pass);
      for (std::size_t l = 0; l < w.weights.size(); ++l) {
        auto& wl = w.weights[l];
        auto& vl = velocity[l];
        const auto& cl = mask.layers[l];
        for (std::size_t i = 0; i < wl.size(); ++i) {
          if (!cl[i]) continue;
          const double g = grad[l][i] + cfg.weight_decay * wl[i];
          vl[i] = cfg.momentum * vl[i] + g;
          wl[i] -= lr * vl[i];
        }
      }
      loss_sum += pass.loss;
      ++batches;
    }
    for (const auto& l : w.weights)
      for (double x : l)
        if (!std::isfinite(x))
          throw TrainingDiverged(epoch, "weights became non-finite at epoch " + std::to_string(epoch));
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = loss_sum / static_cast<double>(batches);
    stats.test_accuracy = accuracy(w, mask, data.test.empty() ? data.train : data.test);
    result.history.push_back(stats);
    snapshot(epoch + 1);
  }
  return result;
}

// Binary checkpoint container, all integers and floats little-endian:
//   "PLCK" | u32 version | i64 epoch | u32 layers |
//   per layer: u8 kind, u8 is_output, u64 fan_in, u64 fan_out, u64 kh, u64 kw,
//              u64 count, count * f64 |
//   u64 rng-state length | rng-state bytes
inline constexpr std::array<char, 4> kCheckpointMagic = {'P', 'L', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

class ByteReader {
 public:
  ByteReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

  std::uint64_t u64() { return read_le(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(read_le(4)); }
  std::uint8_t u8() { return static_cast<std::uint8_t>(read_le(1)); }
  double f64() { return std::bit_cast<double>(u64()); }

  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check(static_cast<std::size_t>(in_.gcount()) == n);
    offset_ += n;
    return s;
  }

  [[noreturn]] void malformed(const std::string& what) const {
    fail(ErrorKind::parse, name_ + ": " + what + " at byte " + std::to_string(offset_));
  }

 private:
  std::uint64_t read_le(int width) {
    unsigned char b[8];
    in_.read(reinterpret_cast<char*>(b), width);
    check(in_.gcount() == width);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    offset_ += static_cast<std::size_t>(width);
    return v;
  }

  void check(bool ok) const {
    if (!ok) malformed("unexpected end of data");
  }

  std::istream& in_;
  std::string name_;
  std::size_t offset_ = 0;
};

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kCheckpointMagic.data(), 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(ckpt.epoch)));
  const auto& p = ckpt.weights;
  require(p.weights.size() == p.specs.size(), ErrorKind::alignment, "checkpoint weights/specs mismatch");
  detail::put_u32(out, static_cast<std::uint32_t>(p.specs.size()));
  for (std::size_t l = 0; l < p.specs.size(); ++l) {
    const LayerSpec& s = p.specs[l];
    detail::put_u8(out, s.kind == LayerKind::conv ? 1 : 0);
    detail::put_u8(out, s.is_output ? 1 : 0);
    detail::put_u64(out, s.fan_in);
    detail::put_u64(out, s.fan_out);
    detail::put_u64(out, s.kernel ? s.kernel->h : 0);
    detail::put_u64(out, s.kernel ? s.kernel->w : 0);
    detail::put_u64(out, p.weights[l].size());
    for (double x : p.weights[l]) detail::put_u64(out, std::bit_cast<std::uint64_t>(x));
  }
  detail::put_u64(out, ckpt.rng_state.size());
  out.write(ckpt.rng_state.data(), static_cast<std::streamsize>(ckpt.rng_state.size()));
}

inline Checkpoint read_checkpoint(std::istream& in, const std::string& name = "checkpoint") {
  detail::ByteReader r(in, name);
  const std::string magic = r.bytes(4);
  if (magic != std::string(kCheckpointMagic.data(), 4)) r.malformed("bad magic");
  if (r.u32() != kCheckpointVersion) r.malformed("unsupported version");
  Checkpoint ckpt;
  ckpt.epoch = static_cast<int>(static_cast<std::int64_t>(r.u64()));
  const std::uint32_t layers = r.u32();
  for (std::uint32_t l = 0; l < layers; ++l) {
    LayerSpec s;
    const auto kind = r.u8();
    if (kind > 1) r.malformed("bad layer kind");
    s.kind = kind ? LayerKind::conv : LayerKind::dense;
    s.is_output = r.u8() != 0;
    s.fan_in = r.u64();
    s.fan_out = r.u64();
    const std::size_t kh = r.u64(), kw = r.u64();
    if (s.kind == LayerKind::conv) s.kernel = KernelSize{kh, kw};
    const std::uint64_t count = r.u64();
    if (count != s.weight_count()) r.malformed("weight count does not match layer shape");
    std::vector<double> w(count);
    for (double& x : w) x = r.f64();
    ckpt.weights.specs.push_back(s);
    ckpt.weights.weights.push_back(std::move(w));
  }
  const std::uint64_t len = r.u64();
  if (len > (1u << 20)) r.malformed("rng state too large");
  ckpt.rng_state = r.bytes(len);
  return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io, "cannot write " + path.string());
  write_checkpoint(out, ckpt);
  require(out.good(), ErrorKind::io, "failed writing " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace prunelab
