#include "pptdetect/metrics.hpp"

#include "pptdetect/common.hpp"
#include <string>

namespace pptdetect::eval {

Confusion confusion(const std::vector<bool>& predicted, const std::vector<bool>& actual) {
  if (predicted.size() != actual.size()) {
    throw ValidationError("confusion: " + std::to_string(predicted.size()) + " predictions for " +
                                std::to_string(actual.size()) + " labels");
  }
  Confusion c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i]) {
      (actual[i] ? c.tp : c.fp)++;
    } else {
      (actual[i] ? c.fn : c.tn)++;
    }
  }
  return c;
}

Metrics metrics_from(const Confusion& c) {
  Metrics m;
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  // 2TP / (2TP + FP + FN) equals 2PR / (P + R) and avoids compounding rounding.
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  return m;
}

}  // namespace pptdetect::eval
