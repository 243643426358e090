#include "coi/method.hpp"

#include <cctype>
#include <string>

#include "coi/error.hpp"

namespace coi {

std::string_view to_string(MethodId m) noexcept {
    switch (m) {
        case MethodId::CoI: return "coi";
        case MethodId::CoI_wo_ID: return "coi_wo_id";
        case MethodId::CoI_wo_IA: return "coi_wo_ia";
        case MethodId::CoI_wo_VA: return "coi_wo_va";
        case MethodId::ZeroShot: return "zero_shot";
        case MethodId::FewShot: return "few_shot";
        case MethodId::ZeroCoT: break;
    }
    return "zero_cot";
}

std::string_view display_name(MethodId m) noexcept {
    switch (m) {
        case MethodId::CoI: return "CoI";
        case MethodId::CoI_wo_ID: return "w/o ID";
        case MethodId::CoI_wo_IA: return "w/o IA";
        case MethodId::CoI_wo_VA: return "w/o VA";
        case MethodId::ZeroShot: return "Zeroshot";
        case MethodId::FewShot: return "Fewshot";
        case MethodId::ZeroCoT: break;
    }
    return "ZeroCoT";
}

MethodId parse_method_id(std::string_view text) {
    auto lower = [](std::string_view s) {
        std::string out;
        for (unsigned char c : s) out.push_back(static_cast<char>(std::tolower(c)));
        return out;
    };
    const std::string key = lower(text);
    for (MethodId m : kAllMethods) {
        if (key == to_string(m) || key == lower(display_name(m))) return m;
    }
    throw ConfigError("unknown method '" + std::string(text) + "'");
}

}  // namespace coi
