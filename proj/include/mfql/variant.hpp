#pragma once

#include <array>
#include <string>
#include <string_view>

namespace mfql {

/// Residual reformulations g = phi - u of the average-velocity network.
enum class VariantId {
  PlainU,      // phi = 0
  Residual_At, // phi = a_t
  E_minus_U,   // phi = e
  Et_minus_U,  // phi = e * t
  Const2,      // phi = 2
  TimeT,       // phi = t
  TwoAt,       // phi = 2 a_t
};

inline constexpr std::array<VariantId, 7> kAllVariants = {
    VariantId::PlainU, VariantId::Residual_At, VariantId::E_minus_U, VariantId::Et_minus_U,
    VariantId::Const2, VariantId::TimeT,       VariantId::TwoAt,
};

/// Canonical config name: u, residual_at, e_minus_u, et_minus_u, const2, time_t, two_at.
std::string_view variant_name(VariantId id);
/// Accepts the canonical names; throws ConfigError otherwise.
VariantId parse_variant(std::string_view name);

}  // namespace mfql
