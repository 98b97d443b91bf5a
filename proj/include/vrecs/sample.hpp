#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vrecs/dataset.hpp"
#include "vrecs/util.hpp"
#include "vrecs/vegazero.hpp"

namespace vrecs {

enum class Hardness { easy, medium, hard, extra_hard };

inline constexpr std::array<Hardness, 4> kHardnessLevels = {Hardness::easy, Hardness::medium, Hardness::hard,
                                                            Hardness::extra_hard};

inline std::string_view to_string(Hardness h) {
    switch (h) {
        case Hardness::easy: return "easy";
        case Hardness::medium: return "medium";
        case Hardness::hard: return "hard";
        case Hardness::extra_hard: return "extra_hard";
    }
    return "easy";
}

/// Accepts "extra_hard", "extra hard", "Extra Hard", "extra-hard".
inline std::optional<Hardness> parse_hardness(std::string_view s) {
    std::string norm = util::to_lower(util::trim(s));
    for (auto& c : norm) {
        if (c == ' ' || c == '-') c = '_';
    }
    for (auto h : kHardnessLevels) {
        if (norm == to_string(h)) return h;
    }
    return std::nullopt;
}

/// The visualization narrative: explanation split into intent summary (e1)
/// and design rationale (e2), a caption, and follow-up questions.
struct Narrative {
    std::string e1;
    std::string e2;
    std::string caption;
    std::vector<std::string> suggestions;

    /// Labels of empty parts among E1, E2, C, S.
    std::vector<std::string> missing_parts() const {
        std::vector<std::string> out;
        if (util::trim(e1).empty()) out.emplace_back("E1");
        if (util::trim(e2).empty()) out.emplace_back("E2");
        if (util::trim(caption).empty()) out.emplace_back("C");
        if (suggestions.empty()) out.emplace_back("S");
        return out;
    }

    bool complete() const { return missing_parts().empty(); }

    bool operator==(const Narrative&) const = default;
};

inline nlohmann::json to_json(const Narrative& n) {
    return {{"e1", n.e1}, {"e2", n.e2}, {"caption", n.caption}, {"suggestions", n.suggestions}};
}

inline Narrative narrative_from_json(const nlohmann::json& j) {
    Narrative n;
    n.e1 = j.value("e1", "");
    n.e2 = j.value("e2", "");
    n.caption = j.value("caption", "");
    n.suggestions = j.value("suggestions", std::vector<std::string>{});
    return n;
}

/// One (D, Q, V) record with its corpus-provided hardness.
struct CorpusTriple {
    std::string id;
    std::shared_ptr<const DataTable> table;
    std::string query;
    Hardness hardness = Hardness::easy;
    vegazero::Spec spec;
};

}  // namespace vrecs
