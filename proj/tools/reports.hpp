#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "run_config.hpp"
#include "ssep/probe.hpp"
#include "ssep/verify.hpp"

namespace ssep::cli {

// Shortest round-trip text for a double; "inf", "-inf" and "nan" for non-finite values.
inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

// JSON has no infinities; they are written as null in reports.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Table cell for a double: a number, or the text "inf", "-inf", "nan".
inline json cell(double v) { return std::isfinite(v) ? json(v) : json(fmt(v)); }

inline json vec(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
    return a;
}

inline json mat(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec(m.row(i).transpose()));
    return a;
}

inline json to_json(const StatsSummary& s) {
    json tails = json::array();
    for (std::size_t k = 0; k < s.tails.size(); ++k) {
        json per_time = json::array();
        for (const auto& t : s.tails[k])
            per_time.push_back({{"level", t.level}, {"count", t.count}, {"log_frequency", num(t.log_frequency)},
                                {"se", num(t.se)}});
        tails.push_back(per_time);
    }
    return {{"times", s.times},
            {"n", s.n},
            {"scale", s.scale},
            {"mean", vec(s.mean)},
            {"mean_se", vec(s.mean_se)},
            {"variance", vec(s.variance)},
            {"variance_se", vec(s.variance_se)},
            {"skewness", vec(s.skewness)},
            {"skewness_se", vec(s.skewness_se)},
            {"excess_kurtosis", vec(s.excess_kurtosis)},
            {"kurtosis_se", vec(s.kurtosis_se)},
            {"covariance", mat(s.covariance)},
            {"covariance_se", mat(s.covariance_se)},
            {"tails", tails},
            {"warnings", s.warnings}};
}

inline json to_json(const FbmComparison& c) {
    json entries = json::array();
    for (const auto& e : c.entries)
        entries.push_back({{"i", e.i}, {"j", e.j}, {"empirical", e.empirical}, {"predicted", e.predicted},
                           {"se", e.se}, {"z", num(e.z)}});
    return {{"entries", entries}, {"max_abs_z", num(c.max_abs_z)}, {"threshold", c.threshold}, {"pass", c.pass}};
}

inline json to_json(const TailSlope& t) {
    return {{"level", t.level}, {"count", t.count}, {"n", t.n},         {"p_hat", t.p_hat},
            {"p_gauss", t.p_gauss}, {"ratio", num(t.ratio)}, {"ci_lo", num(t.ci_lo)}, {"ci_hi", num(t.ci_hi)},
            {"bounded", t.bounded}};
}

inline json to_json(const VerifyCheck& c) {
    return {{"suite", c.suite}, {"name", c.name},           {"pass", c.pass},
            {"value", num(c.value)}, {"tolerance", c.tolerance}, {"detail", c.detail}};
}

// Creates the output directory and opens files inside it. Failures are
// configuration errors: the directory named in io.out_dir is unusable.
class OutputDir {
public:
    explicit OutputDir(const std::string& dir) : dir_(dir) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec || !std::filesystem::is_directory(dir_))
            throw ConfigError("cannot create output directory '" + dir + "'");
    }

    std::ofstream open(const std::string& name) const {
        std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write '" + (dir_ / name).string() + "'");
        return out;
    }

    void write_json(const std::string& name, const json& j) const {
        auto out = open(name);
        out << j.dump(2) << '\n';
        if (!out) throw ConfigError("write failed for '" + (dir_ / name).string() + "'");
    }

    std::filesystem::path path(const std::string& name) const { return dir_ / name; }

private:
    std::filesystem::path dir_;
};

// Row-oriented table written either as CSV (header line) or as JSON lines
// (one object per row keyed by the column names).
class TableWriter {
public:
    TableWriter(std::ostream& out, std::vector<std::string> columns, bool jsonl)
        : out_(out), columns_(std::move(columns)), jsonl_(jsonl) {
        if (!jsonl_) {
            for (std::size_t i = 0; i < columns_.size(); ++i) out_ << (i ? "," : "") << columns_[i];
            out_ << '\n';
        }
    }

    // Cells are JSON values; numbers are written in shortest round-trip form.
    void row(const std::vector<json>& cells) {
        if (cells.size() != columns_.size()) throw std::logic_error("TableWriter: wrong number of cells");
        if (jsonl_) {
            json obj = json::object();
            for (std::size_t i = 0; i < cells.size(); ++i) obj[columns_[i]] = cells[i];
            out_ << obj.dump() << '\n';
            return;
        }
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            const json& c = cells[i];
            if (c.is_number_float()) out_ << fmt(c.get<double>());
            else if (c.is_string()) out_ << c.get<std::string>();
            else out_ << c.dump();
        }
        out_ << '\n';
    }

private:
    std::ostream& out_;
    std::vector<std::string> columns_;
    bool jsonl_;
};

inline std::string table_extension(const RunConfig& c) { return c.io.format == "jsonl" ? ".jsonl" : ".csv"; }

}  // namespace ssep::cli
