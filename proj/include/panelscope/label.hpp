#pragma once

#include <array>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "panelscope/error.hpp"

namespace panelscope {

// McCloud's six panel transitions. The enum order is the canonical index
// order used by every 6-vector in the toolkit.
enum class TransitionLabel : std::uint8_t { ACT = 0, ASP, SUB, SCE, MOM, NON };

inline constexpr std::size_t kNumLabels = 6;

inline constexpr std::array<TransitionLabel, kNumLabels> kAllLabels = {
    TransitionLabel::ACT, TransitionLabel::ASP, TransitionLabel::SUB,
    TransitionLabel::SCE, TransitionLabel::MOM, TransitionLabel::NON};

namespace detail {
inline constexpr std::array<std::string_view, kNumLabels> kCode3 = {"ACT", "ASP", "SUB",
                                                                    "SCE", "MOM", "NON"};
inline constexpr std::array<std::string_view, kNumLabels> kCode2 = {"AC", "AS", "SU",
                                                                    "SC", "MO", "NO"};
inline constexpr std::array<std::string_view, kNumLabels> kNames = {
    "Action-to-action", "Aspect-to-aspect", "Subject-to-subject",
    "Scene-to-scene",   "Moment-to-moment", "Non-sequitur"};
}  // namespace detail

constexpr std::size_t index_of(TransitionLabel l) { return static_cast<std::size_t>(l); }

inline TransitionLabel label_at(std::size_t i) {
    if (i >= kNumLabels) throw ValidationError("label index out of range: " + std::to_string(i));
    return kAllLabels[i];
}

constexpr std::string_view code3(TransitionLabel l) { return detail::kCode3[index_of(l)]; }
constexpr std::string_view code2(TransitionLabel l) { return detail::kCode2[index_of(l)]; }
constexpr std::string_view display_name(TransitionLabel l) { return detail::kNames[index_of(l)]; }

// Accepts the three-letter or two-letter code, case-insensitive.
inline std::optional<TransitionLabel> try_parse_label(std::string_view s) {
    std::string up(s);
    for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (std::size_t i = 0; i < kNumLabels; ++i) {
        if (up == detail::kCode3[i] || up == detail::kCode2[i]) return kAllLabels[i];
    }
    return std::nullopt;
}

inline TransitionLabel parse_label(std::string_view s) {
    if (auto l = try_parse_label(s)) return *l;
    throw ValidationError("invalid transition label '" + std::string(s) +
                          "' (expected one of ACT, ASP, SUB, SCE, MOM, NON)");
}

}  // namespace panelscope
