#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace fastmra {

// MAC-equivalent accounting, fixed conventions:
//   me_search          1 per SAD sample compared
//   transform          64 per 8-point DCT pass (1024 per 8x8 block per direction)
//   entropy_code       1 per scanned coefficient, 2 per coded motion vector
//   classifier_forward 1 per multiply-accumulate of the network
//   warp               2 per compensated output sample (fetch + average)
enum class OpCategory { MeSearch = 0, Transform, EntropyCode, ClassifierForward, Warp };

inline constexpr std::array<const char*, 5> kOpCategoryNames = {
    "me_search", "transform", "entropy_code", "classifier_forward", "warp"};

class OpCounter {
 public:
  void charge(OpCategory c, std::uint64_t macs) { counts_[static_cast<std::size_t>(c)] += macs; }
  void add_pixels(std::uint64_t n) { pixel_base_ += n; }

  std::uint64_t count(OpCategory c) const { return counts_[static_cast<std::size_t>(c)]; }
  std::uint64_t pixel_base() const { return pixel_base_; }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }

  double kmac_per_pixel(OpCategory c) const {
    return pixel_base_ == 0 ? 0.0 : double(count(c)) / (1000.0 * double(pixel_base_));
  }
  double kmac_per_pixel() const {
    return pixel_base_ == 0 ? 0.0 : double(total()) / (1000.0 * double(pixel_base_));
  }

  OpCounter& operator+=(const OpCounter& o) {
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    pixel_base_ += o.pixel_base_;
    return *this;
  }

  bool operator==(const OpCounter&) const = default;

 private:
  std::array<std::uint64_t, 5> counts_{};
  std::uint64_t pixel_base_ = 0;
};

struct KmacRow {
  std::string category;
  double kmac_per_pixel = 0;
  double percent = 0;
};

// Per-category kMAC/pixel with share of the total, zero rows omitted.
inline std::vector<KmacRow> report_kmac(const OpCounter& c) {
  std::vector<KmacRow> rows;
  const double total = double(c.total());
  for (std::size_t i = 0; i < kOpCategoryNames.size(); ++i) {
    const auto cat = static_cast<OpCategory>(i);
    if (c.count(cat) == 0) continue;
    rows.push_back({kOpCategoryNames[i], c.kmac_per_pixel(cat), 100.0 * double(c.count(cat)) / total});
  }
  return rows;
}

inline std::string format_kmac_table(const OpCounter& c) {
  std::string out = "module\tkMAC/pixel\tpercentage\n";
  char line[160];
  for (const auto& r : report_kmac(c)) {
    std::snprintf(line, sizeof line, "%s\t%.3f\t%.1f%%\n", r.category.c_str(), r.kmac_per_pixel,
                  r.percent);
    out += line;
  }
  std::snprintf(line, sizeof line, "total\t%.3f\t%s\n", c.kmac_per_pixel(),
                c.total() ? "100.0%" : "0.0%");
  out += line;
  return out;
}

}  // namespace fastmra
