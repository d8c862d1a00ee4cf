#pragma once

// Model file layout:
//
//     dim=<N>
//     terms=<K>
//     <w>;<z1>,...,<zN>            K lines, one per base learner
//     <m11>,...,<m1N>              N lines, dense matrix row-major
//     loss_history=<l0>,<l1>,...
//     regularizer=<v>              training provenance (optional on read)
//     max_iterations=<T>
//     stop_reason=<reason>
//
// Floats are written with 17 significant digits. The dense matrix on disk is
// authoritative when reading; the terms are kept for inspection.

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hapmetric/boost_metric.hpp"
#include "hapmetric/config.hpp"
#include "hapmetric/error.hpp"

namespace hapmetric {

namespace detail {

inline std::vector<double> parse_double_list(std::string_view text, const std::string& where) {
    std::vector<double> out;
    if (trim(text).empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto comma = text.find(',', start);
        out.push_back(parse_double(text.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                                      : comma - start),
                                   where));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::string expect_prefix(const std::string& line, std::string_view prefix, const std::string& where) {
    if (line.rfind(prefix, 0) != 0) throw InvalidInput(where + ": expected '" + std::string(prefix) + "...'");
    return line.substr(prefix.size());
}

}  // namespace detail

inline void write_model(std::ostream& out, const MahalanobisModel& model) {
    using detail::format_double;
    const std::size_t n = model.dim();
    out << "dim=" << n << '\n';
    out << "terms=" << model.terms().size() << '\n';
    for (const auto& t : model.terms()) {
        out << format_double(t.weight) << ';';
        for (Eigen::Index j = 0; j < t.direction.size(); ++j) {
            if (j) out << ',';
            out << format_double(t.direction(j));
        }
        out << '\n';
    }
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            if (c) out << ',';
            out << format_double(model.matrix()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
        }
        out << '\n';
    }
    out << "loss_history=";
    for (std::size_t i = 0; i < model.loss_history().size(); ++i) {
        if (i) out << ',';
        out << format_double(model.loss_history()[i]);
    }
    out << '\n';
    out << "regularizer=" << format_double(model.regularizer) << '\n';
    out << "max_iterations=" << model.max_iterations << '\n';
    out << "stop_reason=" << to_string(model.stop_reason) << '\n';
}

inline MahalanobisModel read_model(std::istream& in, const std::string& source) {
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    std::size_t pos = 0;
    auto next = [&](const char* what) -> const std::string& {
        if (pos >= lines.size()) throw InvalidInput(source + ": truncated model file, missing " + what);
        return lines[pos++];
    };
    auto where = [&] { return source + ":" + std::to_string(pos); };

    const auto dim = detail::parse_unsigned(detail::expect_prefix(next("dim"), "dim=", where()), where());
    detail::require(dim >= 1, source + ": dim must be >= 1");
    const auto term_count = detail::parse_unsigned(detail::expect_prefix(next("terms"), "terms=", where()), where());

    MahalanobisModel model(dim);
    for (std::uint64_t t = 0; t < term_count; ++t) {
        const std::string& line = next("term");
        const auto semi = line.find(';');
        if (semi == std::string::npos) throw InvalidInput(where() + ": term must be 'w;z1,...,zN'");
        const double w = detail::parse_double(std::string_view(line).substr(0, semi), where());
        const auto z = detail::parse_double_list(std::string_view(line).substr(semi + 1), where());
        if (z.size() != dim) throw InvalidInput(where() + ": term direction has wrong dimension");
        try {
            model.add_term(w, Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(dim)));
        } catch (const InvalidInput& e) {
            throw InvalidInput(where() + ": " + e.what());
        }
    }

    Eigen::MatrixXd m(dim, dim);
    for (std::uint64_t r = 0; r < dim; ++r) {
        const auto row = detail::parse_double_list(next("matrix row"), where());
        if (row.size() != dim) throw InvalidInput(where() + ": matrix row has wrong length");
        for (std::uint64_t c = 0; c < dim; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
        }
    }
    if (!m.allFinite()) throw InvalidInput(source + ": non-finite matrix entry");
    model.set_matrix(std::move(m));

    for (double l : detail::parse_double_list(
             detail::expect_prefix(next("loss_history"), "loss_history=", where()), where())) {
        model.push_loss(l);
    }
    while (pos < lines.size()) {
        const std::string& line = lines[pos++];
        if (detail::trim(line).empty()) continue;
        if (line.rfind("regularizer=", 0) == 0) {
            model.regularizer = detail::parse_double(line.substr(12), where());
        } else if (line.rfind("max_iterations=", 0) == 0) {
            model.max_iterations = detail::parse_unsigned(line.substr(15), where());
        } else if (line.rfind("stop_reason=", 0) == 0) {
            const std::string reason = line.substr(12);
            if (reason == "no_improving_learner") model.stop_reason = StopReason::NoImprovingLearner;
            else if (reason == "zero_step") model.stop_reason = StopReason::ZeroStep;
            else model.stop_reason = StopReason::MaxIterations;
        } else {
            throw InvalidInput(where() + ": unexpected line '" + line + "'");
        }
    }
    return model;
}

inline void write_model(const std::filesystem::path& path, const MahalanobisModel& model) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write model file '" + path.string() + "'");
    write_model(out, model);
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline MahalanobisModel read_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model file '" + path.string() + "'");
    return read_model(in, path.string());
}

}  // namespace hapmetric
