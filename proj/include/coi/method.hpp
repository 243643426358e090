#pragma once

#include <array>
#include <string_view>

namespace coi {

/// Prompting methods: the full chain, its three ablations and the baselines.
enum class MethodId { CoI, CoI_wo_ID, CoI_wo_IA, CoI_wo_VA, ZeroShot, FewShot, ZeroCoT };

inline constexpr std::array<MethodId, 7> kAllMethods = {
    MethodId::CoI,      MethodId::CoI_wo_ID, MethodId::CoI_wo_IA, MethodId::CoI_wo_VA,
    MethodId::ZeroShot, MethodId::FewShot,   MethodId::ZeroCoT};

/// Machine name used in configs and records ("coi_wo_ia", "zero_shot", ...).
std::string_view to_string(MethodId m) noexcept;

/// Row label used in report tables ("w/o IA", "Zeroshot", ...).
std::string_view display_name(MethodId m) noexcept;

/// Accepts the machine name or the display name, case-insensitively.
/// Throws ConfigError on anything else.
MethodId parse_method_id(std::string_view text);

}  // namespace coi
