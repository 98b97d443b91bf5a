#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "vrecs/dataset.hpp"
#include "vrecs/errors.hpp"
#include "vrecs/response.hpp"
#include "vrecs/sample.hpp"
#include "vrecs/util.hpp"
#include "vrecs/vegalite.hpp"

namespace vrecs::study {

inline constexpr std::size_t kAssignmentSize = 10;

/// Score dimensions; each is rated for side a and side b.
inline constexpr std::array<std::string_view, 8> kDimensions = {
    "vis_quality",      "e_informativeness", "e_usefulness", "c_informativeness",
    "c_usefulness",     "s_informativeness", "s_usefulness", "overall_narrative"};

struct StudyResponse {
    std::string model_tag;
    nlohmann::json payload;  // recommendation or error, as shown to participants
};

struct StudySample {
    std::string id;
    TableSketch sketch;
    std::string query;
    std::array<StudyResponse, 2> responses;
    std::size_t assignment_count = 0;
};

struct Assignment {
    std::string participant_id;
    std::vector<std::string> sample_ids;
    std::vector<bool> swapped;  // per sample: side a shows responses[1]
};

struct Rating {
    std::string participant_id;
    std::string sample_id;
    std::map<std::string, int> scores;  // "<dimension>_a" / "<dimension>_b"
    std::optional<int> expertise;       // self-reported 1..5
    std::int64_t timestamp = 0;         // unix epoch milliseconds

    bool operator==(const Rating&) const = default;
};

// ---------------------------------------------------------------------------
// serialization

inline nlohmann::json recommendation_payload(const response::Recommendation& rec) {
    return response::to_json(rec, /*include_raw=*/false);
}

/// Parses a raw completion for display; failures become an error payload.
inline nlohmann::json payload_from_completion(std::string_view raw, const DataTable& table) {
    try {
        auto rec = response::lenient_extract(raw);
        rec.warnings = vegazero::validate(rec.spec, sketch(table));
        if (rec.warnings.empty()) rec.doc = vegazero::compile(rec.spec, table);
        return recommendation_payload(rec);
    } catch (const Error& e) {
        return {{"error", e.kind()}, {"message", e.what()}};
    }
}

inline nlohmann::json to_json(const StudySample& s) {
    return {{"id", s.id},
            {"sketch", vrecs::to_json(s.sketch)},
            {"query", s.query},
            {"responses",
             {{{"model_tag", s.responses[0].model_tag}, {"payload", s.responses[0].payload}},
              {{"model_tag", s.responses[1].model_tag}, {"payload", s.responses[1].payload}}}}};
}

inline StudySample sample_from_json(const nlohmann::json& j) {
    StudySample s;
    s.id = j.at("id").get<std::string>();
    s.sketch = sketch_from_json(j.at("sketch"));
    s.query = j.at("query").get<std::string>();
    const auto& r = j.at("responses");
    if (r.size() != 2) throw InvalidArgument("study sample " + s.id + " must have exactly 2 responses");
    for (std::size_t i = 0; i < 2; ++i) {
        s.responses[i].model_tag = r[i].at("model_tag").get<std::string>();
        s.responses[i].payload = r[i].at("payload");
    }
    return s;
}

inline nlohmann::json to_json(const Assignment& a) {
    return {{"participant_id", a.participant_id}, {"sample_ids", a.sample_ids}, {"swapped", a.swapped}};
}

inline Assignment assignment_from_json(const nlohmann::json& j) {
    return {j.at("participant_id").get<std::string>(), j.at("sample_ids").get<std::vector<std::string>>(),
            j.at("swapped").get<std::vector<bool>>()};
}

inline nlohmann::json to_json(const Rating& r) {
    nlohmann::json j = {{"participant_id", r.participant_id}, {"sample_id", r.sample_id}};
    for (const auto& [k, v] : r.scores) j[k] = v;
    if (r.expertise) j["expertise"] = *r.expertise;
    j["timestamp"] = r.timestamp;
    return j;
}

/// Parses and range-checks a rating. Every "<dimension>_a/_b" field must be
/// an integer in [1, 5]; violations raise RangeError naming the field.
inline Rating rating_from_json(const nlohmann::json& j) {
    Rating r;
    if (!j.is_object()) throw InvalidArgument("rating must be a JSON object");
    auto str = [&](const char* k) {
        if (!j.contains(k) || !j[k].is_string() || j[k].get<std::string>().empty()) {
            throw InvalidArgument(std::string("rating requires ") + k);
        }
        return j[k].get<std::string>();
    };
    r.participant_id = str("participant_id");
    r.sample_id = str("sample_id");
    auto score = [&](const std::string& field) {
        if (!j.contains(field)) throw RangeError(field);
        const auto& v = j[field];
        if (v.is_number_integer() || v.is_number_unsigned()) {
            auto n = v.get<long long>();
            if (n >= 1 && n <= 5) return static_cast<int>(n);
        } else if (v.is_number_float()) {
            double d = v.get<double>();
            if (d == std::floor(d) && d >= 1 && d <= 5) return static_cast<int>(d);
        }
        throw RangeError(field);
    };
    for (auto dim : kDimensions) {
        for (const char* side : {"_a", "_b"}) {
            const std::string field = std::string(dim) + side;
            r.scores[field] = score(field);
        }
    }
    if (j.contains("expertise") && !j["expertise"].is_null()) r.expertise = score("expertise");
    if (j.contains("timestamp")) {
        if (!j["timestamp"].is_number_integer()) throw InvalidArgument("timestamp must be an integer (ms)");
        r.timestamp = j["timestamp"].get<std::int64_t>();
    }
    return r;
}

// ---------------------------------------------------------------------------
// assignment

/// True when side a should show the second response.
inline bool side_swap(std::uint64_t seed, std::string_view participant, std::string_view sample) {
    auto h = util::sha256_hex(std::to_string(seed) + '\0' + std::string(participant) + '\0' + std::string(sample));
    return (std::stoi(h.substr(0, 2), nullptr, 16) & 1) != 0;
}

/// Picks the 10 least-assigned samples (ties broken by a shuffle seeded from
/// `seed` and the participant) and increments their counts.
inline Assignment assign_samples(const std::string& participant_id, std::vector<StudySample>& pool, std::uint64_t seed) {
    if (pool.size() < kAssignmentSize) {
        throw PoolExhausted("pool has " + std::to_string(pool.size()) + " samples, need " +
                            std::to_string(kAssignmentSize));
    }
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto h = util::sha256_hex(std::to_string(seed) + '\0' + participant_id);
    std::mt19937_64 rng(std::stoull(h.substr(0, 16), nullptr, 16));
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pool[a].assignment_count < pool[b].assignment_count; });

    Assignment a;
    a.participant_id = participant_id;
    for (std::size_t k = 0; k < kAssignmentSize; ++k) {
        auto& s = pool[order[k]];
        ++s.assignment_count;
        a.sample_ids.push_back(s.id);
        a.swapped.push_back(side_swap(seed, participant_id, s.id));
    }
    return a;
}

// ---------------------------------------------------------------------------
// summary

struct DimensionStats {
    std::size_t n = 0;
    double mean = 0;
    std::optional<double> std;  // unbiased; undefined for n < 2
};

inline DimensionStats describe(const std::vector<int>& values) {
    DimensionStats s;
    s.n = values.size();
    if (values.empty()) return s;
    double sum = 0;
    for (int v : values) sum += v;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n >= 2) {
        double ss = 0;
        for (int v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    return s;
}

inline nlohmann::ordered_json to_json(const DimensionStats& s) {
    nlohmann::ordered_json j;
    j["n"] = s.n;
    j["mean"] = s.mean;
    if (s.std) j["std"] = *s.std;
    else j["std"] = nullptr;
    return j;
}

// ---------------------------------------------------------------------------
// store

struct BlindedSample {
    std::string sample_id;
    std::size_t position = 0;  // index within the assignment
    std::size_t total = 0;
    nlohmann::json payload;
};

/// Study state backed by append-only JSON-lines files (samples, assignments,
/// ratings) under `dir`, replayed at construction. Without a directory the
/// store is in-memory. All mutations serialize on one mutex.
class StudyStore {
public:
    explicit StudyStore(std::optional<std::filesystem::path> dir = std::nullopt, std::uint64_t seed = 7)
        : dir_(std::move(dir)), seed_(seed) {
        if (!dir_) return;
        for (const auto& j : read_jsonl("samples.jsonl")) {
            auto s = sample_from_json(j);
            index_[s.id] = pool_.size();
            pool_.push_back(std::move(s));
        }
        for (const auto& j : read_jsonl("assignments.jsonl")) {
            auto a = assignment_from_json(j);
            for (const auto& id : a.sample_ids) {
                if (auto it = index_.find(id); it != index_.end()) ++pool_[it->second].assignment_count;
            }
            assignments_[a.participant_id] = std::move(a);
        }
        for (const auto& j : read_jsonl("ratings.jsonl")) store_rating(rating_from_json(j));
    }

    void add_sample(StudySample s) {
        std::lock_guard lock(mu_);
        if (index_.count(s.id)) throw InvalidArgument("duplicate study sample " + s.id);
        s.assignment_count = 0;
        append("samples.jsonl", to_json(s));
        index_[s.id] = pool_.size();
        pool_.push_back(std::move(s));
    }

    std::size_t pool_size() const {
        std::lock_guard lock(mu_);
        return pool_.size();
    }

    std::vector<std::size_t> assignment_counts() const {
        std::lock_guard lock(mu_);
        std::vector<std::size_t> out;
        for (const auto& s : pool_) out.push_back(s.assignment_count);
        return out;
    }

    /// The participant's assignment, issuing one on first contact.
    Assignment assignment(const std::string& participant_id) {
        std::lock_guard lock(mu_);
        return assignment_locked(participant_id);
    }

    /// Next unrated sample of the participant's assignment, blinded; nullopt
    /// once all ten are rated.
    std::optional<BlindedSample> next(const std::string& participant_id) {
        std::lock_guard lock(mu_);
        const auto a = assignment_locked(participant_id);
        for (std::size_t k = 0; k < a.sample_ids.size(); ++k) {
            if (ratings_.count({participant_id, a.sample_ids[k]})) continue;
            const auto& s = pool_.at(index_.at(a.sample_ids[k]));
            const auto& first = s.responses[a.swapped[k] ? 1 : 0];
            const auto& second = s.responses[a.swapped[k] ? 0 : 1];
            BlindedSample b;
            b.sample_id = s.id;
            b.position = k;
            b.total = a.sample_ids.size();
            b.payload = {{"sample_id", s.id},
                         {"position", k},
                         {"total", a.sample_ids.size()},
                         {"query", s.query},
                         {"sketch", vrecs::to_json(s.sketch)},
                         {"a", first.payload},
                         {"b", second.payload}};
            return b;
        }
        return std::nullopt;
    }

    void record_rating(const Rating& r) {
        std::lock_guard lock(mu_);
        auto it = assignments_.find(r.participant_id);
        if (it == assignments_.end() ||
            std::find(it->second.sample_ids.begin(), it->second.sample_ids.end(), r.sample_id) ==
                it->second.sample_ids.end()) {
            throw NotAssigned("sample " + r.sample_id + " is not assigned to participant " + r.participant_id);
        }
        append("ratings.jsonl", to_json(r));
        store_rating(r);
    }

    std::vector<Rating> ratings() const {
        std::lock_guard lock(mu_);
        std::vector<Rating> out;
        for (const auto& [k, r] : ratings_) out.push_back(r);
        return out;
    }

    /// Per model tag, per dimension and cohort: mean and unbiased std.
    /// Cohorts: all, expert (self-rated expertise > 3), non_expert (<= 3).
    nlohmann::ordered_json summary() const {
        std::lock_guard lock(mu_);
        if (ratings_.empty()) throw EmptyInput("no ratings recorded");
        // model -> cohort -> dimension -> values
        std::map<std::string, std::map<std::string, std::map<std::string, std::vector<int>>>> values;
        for (const auto& [key, r] : ratings_) {
            const auto& a = assignments_.at(r.participant_id);
            auto pos = std::find(a.sample_ids.begin(), a.sample_ids.end(), r.sample_id) - a.sample_ids.begin();
            const bool swapped = a.swapped[static_cast<std::size_t>(pos)];
            const auto& s = pool_.at(index_.at(r.sample_id));
            std::vector<std::string> cohorts{"all"};
            if (r.expertise) cohorts.emplace_back(*r.expertise > 3 ? "expert" : "non_expert");
            for (auto dim : kDimensions) {
                for (int side = 0; side < 2; ++side) {
                    const auto& tag = s.responses[(side == 1) != swapped ? 1 : 0].model_tag;
                    int v = r.scores.at(std::string(dim) + (side == 0 ? "_a" : "_b"));
                    for (const auto& c : cohorts) values[tag][c][std::string(dim)].push_back(v);
                }
            }
        }
        nlohmann::ordered_json out;
        out["n_ratings"] = ratings_.size();
        nlohmann::ordered_json models = nlohmann::ordered_json::object();
        for (const auto& [tag, cohorts] : values) {
            nlohmann::ordered_json m = nlohmann::ordered_json::object();
            for (const char* c : {"all", "expert", "non_expert"}) {
                auto it = cohorts.find(c);
                if (it == cohorts.end()) continue;
                nlohmann::ordered_json dims = nlohmann::ordered_json::object();
                for (auto dim : kDimensions) dims[std::string(dim)] = to_json(describe(it->second.at(std::string(dim))));
                m[c] = std::move(dims);
            }
            models[tag] = std::move(m);
        }
        out["models"] = std::move(models);
        return out;
    }

private:
    Assignment assignment_locked(const std::string& participant_id) {
        if (participant_id.empty()) throw InvalidArgument("participant id required");
        if (auto it = assignments_.find(participant_id); it != assignments_.end()) return it->second;
        auto a = assign_samples(participant_id, pool_, seed_);
        append("assignments.jsonl", to_json(a));
        assignments_[participant_id] = a;
        return a;
    }

    void store_rating(const Rating& r) {
        auto key = std::make_pair(r.participant_id, r.sample_id);
        auto it = ratings_.find(key);
        if (it == ratings_.end() || r.timestamp >= it->second.timestamp) ratings_[key] = r;
    }

    std::vector<nlohmann::json> read_jsonl(const char* name) const {
        std::vector<nlohmann::json> out;
        auto path = *dir_ / name;
        if (!std::filesystem::exists(path)) return out;
        for (const auto& line : util::split_lines(util::read_file(path))) {
            if (util::trim(line).empty()) continue;
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (!j.is_discarded()) out.push_back(std::move(j));
        }
        return out;
    }

    void append(const char* name, const nlohmann::json& j) const {
        if (dir_) util::append_line(*dir_ / name, j.dump());
    }

    std::optional<std::filesystem::path> dir_;
    std::uint64_t seed_;
    mutable std::mutex mu_;
    std::vector<StudySample> pool_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, Assignment> assignments_;
    std::map<std::pair<std::string, std::string>, Rating> ratings_;
};

}  // namespace vrecs::study
