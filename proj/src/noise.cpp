#include "unravel/noise.hpp"

#include <cmath>
#include <numbers>

#include "unravel/errors.hpp"

namespace unravel {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(product >> 32);
  lo = static_cast<std::uint32_t>(product);
}

}  // namespace

Philox4x32::Counter Philox4x32::block(Counter ctr, Key key) noexcept {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

NoiseSource::NoiseSource(std::uint64_t master_seed, std::uint64_t stream_index, int channels)
    : seed_(master_seed), stream_(stream_index), channels_(channels) {
  if (channels < 1) throw Error(ErrorCode::InvalidConfig, "noise needs at least one channel");
}

void NoiseSource::refill() {
  const Philox4x32::Counter ctr{static_cast<std::uint32_t>(next_block_),
                                static_cast<std::uint32_t>(next_block_ >> 32),
                                static_cast<std::uint32_t>(stream_),
                                static_cast<std::uint32_t>(stream_ >> 32)};
  const Philox4x32::Key key{static_cast<std::uint32_t>(seed_),
                            static_cast<std::uint32_t>(seed_ >> 32)};
  words_ = Philox4x32::block(ctr, key);
  ++next_block_;
  word_pos_ = 0;
}

double NoiseSource::uniform() {
  if (word_pos_ >= 4) refill();
  const std::uint64_t bits = (static_cast<std::uint64_t>(words_[word_pos_]) << 32) |
                             words_[word_pos_ + 1];
  word_pos_ += 2;
  // Midpoint of one of 2^53 equal cells: never 0, never 1.
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

double NoiseSource::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

void NoiseSource::draw(double dt, std::span<double> out) {
  const double scale = std::sqrt(dt);
  for (double& x : out) x = scale * normal();
}

CoarsenedIncrements::CoarsenedIncrements(IncrementSource& fine, int factor)
    : fine_(fine), factor_(factor) {
  if (factor < 1) throw Error(ErrorCode::InvalidConfig, "coarsening factor must be >= 1");
  if (fine.channels() > static_cast<int>(scratch_.size())) {
    throw Error(ErrorCode::InvalidConfig, "too many channels for coarsening");
  }
}

void CoarsenedIncrements::draw(double dt, std::span<double> out) {
  const std::span<double> fine(scratch_.data(), out.size());
  for (double& x : out) x = 0.0;
  for (int i = 0; i < factor_; ++i) {
    fine_.draw(dt / factor_, fine);
    for (std::size_t n = 0; n < out.size(); ++n) out[n] += fine[n];
  }
}

}  // namespace unravel
