#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

namespace unravel {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). A 128-bit
/// counter is encrypted under a 64-bit key; no state is carried between
/// blocks, so any block of any stream can be computed directly.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter counter, Key key) noexcept;
};

inline constexpr std::string_view kRngAlgorithm = "philox4x32-10+box-muller";

/// Source of Brownian increments dB_n ~ N(0, dt), one per channel per call.
class IncrementSource {
 public:
  virtual ~IncrementSource() = default;
  virtual int channels() const noexcept = 0;
  virtual void draw(double dt, std::span<double> out) = 0;
};

/// One reproducible random stream. The key is the master seed, the upper
/// half of the counter is the stream index and the lower half counts blocks,
/// so (master_seed, stream_index) fixes the whole sequence and distinct
/// stream indices never share a block.
///
/// Each block yields two 53-bit uniforms in (0, 1); normals come from the
/// Box-Muller transform applied to a pair of uniforms, both outputs used.
class NoiseSource final : public IncrementSource {
 public:
  NoiseSource(std::uint64_t master_seed, std::uint64_t stream_index, int channels = 1);

  std::uint64_t master_seed() const noexcept { return seed_; }
  std::uint64_t stream_index() const noexcept { return stream_; }
  int channels() const noexcept override { return channels_; }

  double uniform();
  double normal();
  void draw(double dt, std::span<double> out) override;

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  int channels_;
  std::uint64_t next_block_ = 0;
  std::array<std::uint32_t, 4> words_{};
  int word_pos_ = 4;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// Increments at step dt assembled from `factor` consecutive draws of a
/// finer source at dt / factor: the same Brownian path seen on a coarser grid.
class CoarsenedIncrements final : public IncrementSource {
 public:
  CoarsenedIncrements(IncrementSource& fine, int factor);

  int channels() const noexcept override { return fine_.channels(); }
  void draw(double dt, std::span<double> out) override;

 private:
  IncrementSource& fine_;
  int factor_;
  std::array<double, 64> scratch_{};
};

}  // namespace unravel
