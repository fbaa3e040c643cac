#pragma once
// File formats and serialization.
//
//   dataset CSV:  header P,Y,ZD1..,ZS1..,W1.. ; one market per row
//   region CSV:   a_value,b_value,statistic,critical,member
//   welfare CSV:  tau,cs_ratio,revenue_ratio,welfare_sum
//   fits/configs: JSON
//
// Floats in CSV are printed with 17 significant digits (%.17g) so every
// value round-trips exactly; JSON relies on the serializer's shortest
// round-trip representation.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wrightiv/common.hpp"
#include "wrightiv/counterfactual.hpp"
#include "wrightiv/gmm.hpp"
#include "wrightiv/structural.hpp"
#include "wrightiv/weak_id.hpp"

namespace wrightiv {

using nlohmann::json;

inline std::string format_float17(double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.17g", value);
    return buffer;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file for reading: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("read failure on file: " + path);
    return buf.str();
}

inline void write_text_file(const std::string& path,
                            const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open file for writing: " + path);
    out << content;
    out.flush();
    if (!out) throw IoError("write failure on file: " + path);
}

// ---------------------------------------------------------------------------
// Dataset CSV
// ---------------------------------------------------------------------------

inline std::string dataset_to_csv(const Dataset& data) {
    std::string out = "P,Y";
    for (int j = 0; j < data.dim_zd; ++j) out += ",ZD" + std::to_string(j + 1);
    for (int j = 0; j < data.dim_zs; ++j) out += ",ZS" + std::to_string(j + 1);
    for (int j = 0; j < data.dim_w; ++j) out += ",W" + std::to_string(j + 1);
    out += "\n";
    for (const auto& obs : data.observations) {
        out += format_float17(obs.p);
        out += ",";
        out += format_float17(obs.y);
        for (int j = 0; j < data.dim_zd; ++j) {
            out += ",";
            out += format_float17(obs.zd(j));
        }
        for (int j = 0; j < data.dim_zs; ++j) {
            out += ",";
            out += format_float17(obs.zs(j));
        }
        for (int j = 0; j < data.dim_w; ++j) {
            out += ",";
            out += format_float17(obs.w(j));
        }
        out += "\n";
    }
    return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        const auto first = field.find_first_not_of(" \t\r");
        if (first == std::string::npos) {
            fields.push_back("");
        } else {
            const auto last = field.find_last_not_of(" \t\r");
            fields.push_back(field.substr(first, last - first + 1));
        }
    }
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

inline double parse_double_field(const std::string& field,
                                 const std::string& origin, long line_no) {
    if (field.empty()) {
        throw ParseError("empty numeric field", origin, line_no);
    }
    char* end = nullptr;
    const double value = std::strtod(field.c_str(), &end);
    if (end != field.c_str() + field.size()) {
        throw ParseError("malformed number '" + field + "'", origin, line_no);
    }
    return value;
}

}  // namespace detail

// Parses the dataset CSV schema. The header must read P, Y, then the ZD, ZS
// and W groups with consecutive 1-based numbering; a missing or misplaced
// column is reported by name.
inline Dataset parse_dataset_csv(const std::string& text,
                                 const std::string& origin = "<string>") {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("empty file, expected header", origin, 1);
    }
    const auto header = detail::split_csv_line(line);

    std::size_t pos = 0;
    auto expect = [&](const std::string& name) {
        if (pos >= header.size() || header[pos] != name) {
            throw ParseError("missing column " + name +
                                 (pos < header.size()
                                      ? " (found '" + header[pos] + "')"
                                      : ""),
                             origin, 1);
        }
        ++pos;
    };
    expect("P");
    expect("Y");
    auto count_group = [&](const std::string& prefix) {
        int count = 0;
        while (pos < header.size() &&
               header[pos] == prefix + std::to_string(count + 1)) {
            ++count;
            ++pos;
        }
        return count;
    };
    Dataset data;
    data.dim_zd = count_group("ZD");
    data.dim_zs = count_group("ZS");
    data.dim_w = count_group("W");
    if (pos != header.size()) {
        throw ParseError("unexpected column '" + header[pos] + "'", origin, 1);
    }
    const std::size_t expected_fields =
        2 + static_cast<std::size_t>(data.dim_zd + data.dim_zs + data.dim_w);

    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != expected_fields) {
            throw ParseError("expected " + std::to_string(expected_fields) +
                                 " fields, found " +
                                 std::to_string(fields.size()),
                             origin, line_no);
        }
        MarketObservation obs;
        std::size_t f = 0;
        obs.p = detail::parse_double_field(fields[f++], origin, line_no);
        obs.y = detail::parse_double_field(fields[f++], origin, line_no);
        obs.zd = VectorXd(data.dim_zd);
        for (int j = 0; j < data.dim_zd; ++j) {
            obs.zd(j) = detail::parse_double_field(fields[f++], origin, line_no);
        }
        obs.zs = VectorXd(data.dim_zs);
        for (int j = 0; j < data.dim_zs; ++j) {
            obs.zs(j) = detail::parse_double_field(fields[f++], origin, line_no);
        }
        obs.w = VectorXd(data.dim_w);
        for (int j = 0; j < data.dim_w; ++j) {
            obs.w(j) = detail::parse_double_field(fields[f++], origin, line_no);
        }
        data.observations.push_back(std::move(obs));
    }
    if (data.observations.empty()) {
        throw ParseError("no data rows", origin, line_no);
    }
    data.provenance = Dataset::Provenance::ingested;
    return data;
}

inline Dataset read_dataset_csv(const std::string& path) {
    return parse_dataset_csv(read_text_file(path), path);
}

// ---------------------------------------------------------------------------
// Region / welfare CSV
// ---------------------------------------------------------------------------

inline std::string region_to_csv(const ConfidenceRegion& region) {
    std::string out = "a_value,b_value,statistic,critical,member\n";
    const long total = region.grid.total();
    for (long idx = 0; idx < total; ++idx) {
        const auto theta = region.grid.point(idx);
        out += format_float17(theta(0));
        out += ",";
        out += format_float17(theta(1));
        out += ",";
        out += format_float17(region.statistics(idx));
        out += ",";
        out += format_float17(region.critical_values(idx));
        out += ",";
        out += region.members[static_cast<std::size_t>(idx)] ? "1" : "0";
        out += "\n";
    }
    return out;
}

inline std::string welfare_to_csv(const WelfareCurve& curve) {
    std::string out = "tau,cs_ratio,revenue_ratio,welfare_sum\n";
    for (Eigen::Index i = 0; i < curve.tau_grid.size(); ++i) {
        out += format_float17(curve.tau_grid(i));
        out += ",";
        out += format_float17(curve.cs_ratio(i));
        out += ",";
        out += format_float17(curve.revenue_ratio(i));
        out += ",";
        out += format_float17(curve.welfare_sum(i));
        out += "\n";
    }
    return out;
}

inline std::string outcome_to_csv(const CounterfactualOutcome& outcome) {
    std::string out =
        "tau,pass_through,delta_p,delta_y,p_star,y_star,cs_change_ratio,"
        "revenue_ratio,welfare_sum\n";
    out += format_float17(outcome.tau);
    out += ",";
    out += format_float17(outcome.pass_through_c);
    out += ",";
    out += format_float17(outcome.delta_p);
    out += ",";
    out += format_float17(outcome.delta_y);
    out += ",";
    out += format_float17(outcome.p_star);
    out += ",";
    out += format_float17(outcome.y_star);
    out += ",";
    out += format_float17(outcome.cs_change_ratio);
    out += ",";
    out += format_float17(outcome.revenue_ratio);
    out += ",";
    out += format_float17(outcome.welfare_sum);
    out += "\n";
    return out;
}

// ---------------------------------------------------------------------------
// JSON conversions
// ---------------------------------------------------------------------------

namespace detail {

inline VectorXd vector_from_json(const json& j, const std::string& path) {
    if (!j.is_array()) {
        throw ConfigError("config field " + path + " must be an array");
    }
    VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) {
            throw ConfigError("config field " + path +
                              " must contain only numbers");
        }
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

inline json vector_to_json(const VectorXd& v) {
    json j = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

template <class T>
T field_or(const json& j, const std::string& key, const T& fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& err) {
        throw ConfigError("config field " + key + ": " + err.what());
    }
}

}  // namespace detail

inline json params_to_json(const StructuralParams& p) {
    return json{{"alpha1", p.alpha1},
                {"beta1", p.beta1},
                {"alpha2", detail::vector_to_json(p.alpha2)},
                {"beta2", detail::vector_to_json(p.beta2)},
                {"alpha3", detail::vector_to_json(p.alpha3)},
                {"beta3", detail::vector_to_json(p.beta3)},
                {"sigma_d", p.sigma_d},
                {"sigma_s", p.sigma_s}};
}

inline StructuralParams params_from_json(const json& j,
                                         StructuralParams p = {}) {
    p.alpha1 = detail::field_or(j, "alpha1", p.alpha1);
    p.beta1 = detail::field_or(j, "beta1", p.beta1);
    if (j.contains("alpha2")) {
        p.alpha2 = detail::vector_from_json(j.at("alpha2"), "alpha2");
    }
    if (j.contains("beta2")) {
        p.beta2 = detail::vector_from_json(j.at("beta2"), "beta2");
    }
    if (j.contains("alpha3")) {
        p.alpha3 = detail::vector_from_json(j.at("alpha3"), "alpha3");
    }
    if (j.contains("beta3")) {
        p.beta3 = detail::vector_from_json(j.at("beta3"), "beta3");
    }
    p.sigma_d = detail::field_or(j, "sigma_d", p.sigma_d);
    p.sigma_s = detail::field_or(j, "sigma_s", p.sigma_s);
    return p;
}

inline json shifters_to_json(const ShifterSpec& s) {
    return json{{"dim_zd", s.dim_zd},
                {"dim_zs", s.dim_zs},
                {"dim_w", s.dim_w},
                {"w_has_constant", s.w_has_constant},
                {"k1_loadings_zd", detail::vector_to_json(s.k1_loadings_zd)},
                {"k1_loadings_zs", detail::vector_to_json(s.k1_loadings_zs)},
                {"k2_loading_d", s.k2_loading_d},
                {"k2_loading_s", s.k2_loading_s},
                {"zd_sds", detail::vector_to_json(s.zd_sds)},
                {"zs_sds", detail::vector_to_json(s.zs_sds)},
                {"w_sds", detail::vector_to_json(s.w_sds)}};
}

inline ShifterSpec shifters_from_json(const json& j) {
    ShifterSpec base;
    const int dim_zd = detail::field_or(j, "dim_zd", base.dim_zd);
    const int dim_zs = detail::field_or(j, "dim_zs", base.dim_zs);
    const int dim_w = detail::field_or(j, "dim_w", base.dim_w);
    ShifterSpec s = ShifterSpec::iid(dim_zd, dim_zs, dim_w,
                                     detail::field_or(j, "w_has_constant",
                                                      base.w_has_constant));
    if (j.contains("k1_loadings_zd")) {
        s.k1_loadings_zd =
            detail::vector_from_json(j.at("k1_loadings_zd"), "k1_loadings_zd");
    }
    if (j.contains("k1_loadings_zs")) {
        s.k1_loadings_zs =
            detail::vector_from_json(j.at("k1_loadings_zs"), "k1_loadings_zs");
    }
    s.k2_loading_d = detail::field_or(j, "k2_loading_d", s.k2_loading_d);
    s.k2_loading_s = detail::field_or(j, "k2_loading_s", s.k2_loading_s);
    if (j.contains("zd_sds")) {
        s.zd_sds = detail::vector_from_json(j.at("zd_sds"), "zd_sds");
    }
    if (j.contains("zs_sds")) {
        s.zs_sds = detail::vector_from_json(j.at("zs_sds"), "zs_sds");
    }
    if (j.contains("w_sds")) {
        s.w_sds = detail::vector_from_json(j.at("w_sds"), "w_sds");
    }
    return s;
}

inline json theta_box_to_json(const ThetaBox& box) {
    return json{{"lower", {box.lower(0), box.lower(1)}},
                {"upper", {box.upper(0), box.upper(1)}}};
}

inline ThetaBox theta_box_from_json(const json& j) {
    ThetaBox box;
    if (j.contains("lower")) {
        const VectorXd lo = detail::vector_from_json(j.at("lower"), "lower");
        if (lo.size() != 2) throw ConfigError("theta_box.lower needs 2 entries");
        box.lower = lo;
    }
    if (j.contains("upper")) {
        const VectorXd hi = detail::vector_from_json(j.at("upper"), "upper");
        if (hi.size() != 2) throw ConfigError("theta_box.upper needs 2 entries");
        box.upper = hi;
    }
    box.validate();
    return box;
}

inline json gmm_fit_to_json(const GmmFit& fit) {
    json steps = json::array();
    for (const auto& step : fit.steps) {
        steps.push_back({step(0), step(1)});
    }
    json omega = json::array();
    for (Eigen::Index r = 0; r < fit.omega_hat.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < fit.omega_hat.cols(); ++c) {
            row.push_back(fit.omega_hat(r, c));
        }
        omega.push_back(row);
    }
    json out{{"estimates", {{"alpha1", fit.theta_hat(0)},
                            {"beta1", fit.theta_hat(1)}}},
             {"standard_errors", {{"alpha1", fit.se(0)}, {"beta1", fit.se(1)}}},
             {"vcov",
              {{fit.vcov(0, 0), fit.vcov(0, 1)},
               {fit.vcov(1, 0), fit.vcov(1, 1)}}},
             {"omega_hat", omega},
             {"weighting", to_string(fit.weighting.kind)},
             {"mode", to_string(fit.mode)},
             {"steps", steps}};
    if (std::isfinite(fit.objective)) {
        out["cue_objective"] = fit.objective;
        out["on_boundary"] = fit.on_boundary;
    }
    return out;
}

}  // namespace wrightiv
