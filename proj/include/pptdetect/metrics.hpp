#pragma once

#include <cstddef>
#include <vector>

namespace pptdetect::eval {

/// Binary confusion counts with a designated positive class.
struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  bool operator==(const Confusion&) const = default;
};

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// predicted/actual are true for the positive class.
Confusion confusion(const std::vector<bool>& predicted, const std::vector<bool>& actual);

/// Precision, recall and F1 are 0 when their denominators are 0.
Metrics metrics_from(const Confusion& c);

}  // namespace pptdetect::eval
