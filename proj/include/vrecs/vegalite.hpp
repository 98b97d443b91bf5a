#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "vrecs/dataset.hpp"
#include "vrecs/executor.hpp"
#include "vrecs/vegazero.hpp"

namespace vrecs::vegazero {

inline constexpr const char* kVegaLiteSchema = "https://vega.github.io/schema/vega-lite/v5.json";

/// A Vega-Lite v5 document with the executed data inlined. Key order is
/// fixed so serialization is byte-stable.
struct VegaLiteDoc {
    nlohmann::ordered_json json;

    std::string dump() const { return json.dump(2) + "\n"; }

    /// Fields named by any encoding channel.
    std::vector<std::string> encoded_fields() const {
        std::vector<std::string> out;
        if (!json.contains("encoding")) return out;
        for (const auto& [channel, enc] : json.at("encoding").items()) {
            if (enc.contains("field")) out.push_back(enc.at("field").get<std::string>());
        }
        return out;
    }

    std::size_t row_count() const {
        if (!json.contains("data") || !json.at("data").contains("values")) return 0;
        return json.at("data").at("values").size();
    }

    bool operator==(const VegaLiteDoc&) const = default;
};

namespace detail {

inline nlohmann::ordered_json channel(const std::string& field, std::string_view type) {
    nlohmann::ordered_json c;
    c["field"] = field;
    c["type"] = type;
    return c;
}

}  // namespace detail

/// Executes the spec and wraps the result. Marks map 1:1; an arc encodes y
/// as theta and x as color (a separate color column moves to detail).
/// Binned x becomes ordinal and keeps the executor's chronological order.
/// Throws CompileError when validation fails.
inline VegaLiteDoc compile(const Spec& spec, const DataTable& table) {
    auto violations = validate(spec, sketch(table));
    if (!violations.empty()) {
        std::vector<std::string> msgs;
        for (const auto& v : violations) msgs.push_back(describe(v));
        throw CompileError("spec does not validate against table '" + table.name() + "'", std::move(msgs));
    }
    const DataTable data = execute(spec, table);
    const auto& cols = data.columns();

    nlohmann::ordered_json values = nlohmann::ordered_json::array();
    for (const auto& row : data.rows()) {
        nlohmann::ordered_json obj = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < cols.size(); ++i) obj[cols[i].name] = cell_to_json(row[i]);
        values.push_back(std::move(obj));
    }

    const std::string x_type = spec.bin ? "ordinal" : std::string(to_string(cols[0].type));
    auto x = detail::channel(cols[0].name, x_type);
    auto y = detail::channel(cols[1].name, to_string(cols[1].type));

    const bool arc = spec.mark == Mark::arc;
    const std::string y_channel = arc ? "theta" : "y";
    if (spec.sort) {
        if (spec.sort->axis == Axis::y) {
            x["sort"] = (spec.sort->order == SortOrder::desc ? "-" : "") + y_channel;
        } else if (spec.bin) {
            x["sort"] = nullptr;
        } else {
            x["sort"] = spec.sort->order == SortOrder::asc ? "ascending" : "descending";
        }
    } else if (spec.bin) {
        x["sort"] = nullptr;
    }

    nlohmann::ordered_json encoding = nlohmann::ordered_json::object();
    if (arc) {
        encoding["theta"] = std::move(y);
        encoding["color"] = std::move(x);
        if (spec.color) encoding["detail"] = detail::channel(cols[2].name, to_string(cols[2].type));
    } else {
        encoding["x"] = std::move(x);
        encoding["y"] = std::move(y);
        if (spec.color) encoding["color"] = detail::channel(cols[2].name, to_string(cols[2].type));
    }

    VegaLiteDoc doc;
    doc.json["$schema"] = kVegaLiteSchema;
    doc.json["data"] = {{"values", std::move(values)}};
    doc.json["mark"] = to_string(spec.mark);
    doc.json["encoding"] = std::move(encoding);
    return doc;
}

}  // namespace vrecs::vegazero
