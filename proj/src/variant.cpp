#include "mfql/variant.hpp"

#include "mfql/errors.hpp"

namespace mfql {

std::string_view variant_name(VariantId id) {
  switch (id) {
    case VariantId::PlainU: return "u";
    case VariantId::Residual_At: return "residual_at";
    case VariantId::E_minus_U: return "e_minus_u";
    case VariantId::Et_minus_U: return "et_minus_u";
    case VariantId::Const2: return "const2";
    case VariantId::TimeT: return "time_t";
    case VariantId::TwoAt: return "two_at";
  }
  throw ConfigError("unknown variant id");
}

VariantId parse_variant(std::string_view name) {
  for (VariantId id : kAllVariants) {
    if (variant_name(id) == name) return id;
  }
  throw ConfigError("unknown variant '" + std::string(name) +
                    "' (expected u, residual_at, e_minus_u, et_minus_u, const2, time_t, two_at)");
}

}  // namespace mfql
