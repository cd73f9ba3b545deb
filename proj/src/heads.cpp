#include "driverep/heads/heads.hpp"

namespace driverep {

std::string HeadVariant::label() const {
  return head_kind_name(kind) + "_" + head_size_name(size);
}

HeadKind parse_head_kind(const std::string& name) {
  if (name == "pro1d") return HeadKind::kDirectProjection1d;
  if (name == "avg1d") return HeadKind::kConvAvg3d;
  if (name == "avg2d") return HeadKind::kTemporalAxisReduction;
  throw ConfigError("unknown head variant: '" + name +
                    "' (expected pro1d, avg1d or avg2d)");
}

HeadSize parse_head_size(const std::string& name) {
  if (name == "s") return HeadSize::kS;
  if (name == "xl") return HeadSize::kXl;
  throw ConfigError("unknown head size: '" + name + "' (expected s or xl)");
}

std::string head_kind_name(HeadKind k) {
  switch (k) {
    case HeadKind::kDirectProjection1d:
      return "pro1d";
    case HeadKind::kConvAvg3d:
      return "avg1d";
    case HeadKind::kTemporalAxisReduction:
      return "avg2d";
  }
  return "?";
}

std::string head_size_name(HeadSize s) {
  return s == HeadSize::kS ? "s" : "xl";
}

}  // namespace driverep
