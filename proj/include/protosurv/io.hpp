#pragma once
// Canonical text formats. Every file is line-delimited with a versioned
// header line; reals are written at 17 significant digits so values
// round-trip exactly and diffs stay reviewable.
//
// Grammar summary (space-separated tokens, one record per line):
//   config:   "protosurv_config v1" then "<key> <value>" per field
//   dataset:  "protosurv_dataset v1", "modality_dims <d...>", "records <n>",
//             then "<sample_id> <event_time> <censored> <time_bin> <reals...>"
//   bins:     "protosurv_bins v1", "time_bins <k>", "edges <k+1 reals>"
//   library:  "protosurv_library v1", header keys, "center <c> <D reals>",
//             "proto <id> <class> <kind> <slot> <creation_epoch>
//              <update_count> <residual> <nsrc> (<sid> <w>)* <D reals>"
//   encoder:  "protosurv_encoder v1", dims, "w <row> <in reals>", "b <reals>"

#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "protosurv/core.hpp"
#include "protosurv/data.hpp"
#include "protosurv/library.hpp"

namespace protosurv {

namespace ioutil {

inline std::vector<std::string> split_tokens(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

inline std::string where(const std::string& path, std::size_t line_no) {
    return path + ":" + std::to_string(line_no);
}

inline double parse_real(const std::string& tok, const std::string& context) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0' || errno == ERANGE)
        throw DataError(context + ": bad real '" + tok + "'");
    return v;
}

inline long long parse_int(const std::string& tok, const std::string& context) {
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0' || errno == ERANGE)
        throw DataError(context + ": bad integer '" + tok + "'");
    return v;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path().empty()
                                            ? std::filesystem::path(".")
                                            : path.parent_path());
    std::ofstream out(path, std::ios::binary);  // binary: no newline surprises
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
}

inline void expect_header(const std::vector<std::string>& lines,
                          const std::string& magic, const std::string& path) {
    if (lines.empty() || split_tokens(lines[0]) != std::vector<std::string>{magic, "v1"})
        throw DataError(path + ":1: expected header '" + magic + " v1'");
}

}  // namespace ioutil

// ---------------------------------------------------------------- config

inline std::string emit_config(const EngineConfig& c) {
    std::ostringstream out;
    out << "protosurv_config v1\n";
    out << "fused_dim " << c.fused_dim << "\n";
    out << "num_classes " << c.num_classes << "\n";
    out << "typical_per_class " << c.typical_per_class << "\n";
    out << "wandering_per_class " << c.wandering_per_class << "\n";
    out << "time_bins " << c.time_bins << "\n";
    out << "power_exponent " << format_real(c.power_exponent) << "\n";
    out << "ema_decay " << format_real(c.ema_decay) << "\n";
    out << "band_fraction " << format_real(c.band_fraction) << "\n";
    out << "weight_mean_sim " << format_real(c.weight_mean_sim) << "\n";
    out << "weight_max_sim " << format_real(c.weight_max_sim) << "\n";
    out << "weight_center_sim " << format_real(c.weight_center_sim) << "\n";
    out << "replace_threshold " << format_real(c.replace_threshold) << "\n";
    out << "center_loss_weight " << format_real(c.center_loss_weight) << "\n";
    out << "censored_weight " << format_real(c.censored_weight) << "\n";
    out << "prototype_loss_weight " << format_real(c.prototype_loss_weight) << "\n";
    out << "update_period_epochs " << c.update_period_epochs << "\n";
    out << "top_sources " << c.top_sources << "\n";
    out << "update_top_k " << c.update_top_k << "\n";
    out << "normalization " << to_string(c.normalization) << "\n";
    return out.str();
}

inline std::string config_hash(const EngineConfig& c) { return hash_hex(emit_config(c)); }

// Applies "<key> <value>" pairs onto a default-constructed config.
// Unknown keys are errors; `extra`, when given, collects keys the engine
// config does not own (trainer options share the config file).
inline EngineConfig parse_config(
    const std::vector<std::string>& lines, const std::string& path,
    std::vector<std::pair<std::string, std::string>>* extra = nullptr) {
    ioutil::expect_header(lines, "protosurv_config", path);
    EngineConfig c;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto toks = ioutil::split_tokens(lines[i]);
        if (toks.empty()) continue;
        const std::string ctx = ioutil::where(path, i + 1);
        if (toks.size() != 2) throw DataError(ctx + ": expected '<key> <value>'");
        const std::string& key = toks[0];
        const std::string& val = toks[1];
        if (key == "fused_dim") c.fused_dim = static_cast<int>(ioutil::parse_int(val, ctx));
        else if (key == "num_classes") c.num_classes = static_cast<int>(ioutil::parse_int(val, ctx));
        else if (key == "typical_per_class") c.typical_per_class = static_cast<int>(ioutil::parse_int(val, ctx));
        else if (key == "wandering_per_class") c.wandering_per_class = static_cast<int>(ioutil::parse_int(val, ctx));
        else if (key == "time_bins") c.time_bins = static_cast<int>(ioutil::parse_int(val, ctx));
        else if (key == "power_exponent") c.power_exponent = ioutil::parse_real(val, ctx);
        else if (key == "ema_decay") c.ema_decay = ioutil::parse_real(val, ctx);
        else if (key == "band_fraction") c.band_fraction = ioutil::parse_real(val, ctx);
        else if (key == "weight_mean_sim") c.weight_mean_sim = ioutil::parse_real(val, ctx);
        else if (key == "weight_max_sim") c.weight_max_sim = ioutil::parse_real(val, ctx);
        else if (key == "weight_center_sim") c.weight_center_sim = ioutil::parse_real(val, ctx);
        else if (key == "replace_threshold") c.replace_threshold = ioutil::parse_real(val, ctx);
        else if (key == "center_loss_weight") c.center_loss_weight = ioutil::parse_real(val, ctx);
        else if (key == "censored_weight") c.censored_weight = ioutil::parse_real(val, ctx);
        else if (key == "prototype_loss_weight") c.prototype_loss_weight = ioutil::parse_real(val, ctx);
        else if (key == "update_period_epochs") c.update_period_epochs = static_cast<int>(ioutil::parse_int(val, ctx));
        else if (key == "top_sources") c.top_sources = static_cast<int>(ioutil::parse_int(val, ctx));
        else if (key == "update_top_k") c.update_top_k = static_cast<int>(ioutil::parse_int(val, ctx));
        else if (key == "normalization") c.normalization = normalization_policy_from_string(val);
        else if (extra) extra->emplace_back(key, val);
        else throw DataError(ctx + ": unknown config key '" + key + "'");
    }
    return c;
}

inline EngineConfig parse_config(const std::string& text,
                                 std::vector<std::pair<std::string, std::string>>* extra = nullptr) {
    std::vector<std::string> lines;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) lines.push_back(line);
    return parse_config(lines, "<string>", extra);
}

inline EngineConfig read_config(const std::filesystem::path& path,
                                std::vector<std::pair<std::string, std::string>>* extra = nullptr) {
    return parse_config(ioutil::read_lines(path), path.string(), extra);
}

inline void write_config(const std::filesystem::path& path, const EngineConfig& c) {
    ioutil::write_text(path, emit_config(c));
}

// ---------------------------------------------------------------- dataset

inline std::string emit_dataset(const Dataset& ds) {
    std::ostringstream out;
    out << "protosurv_dataset v1\n";
    out << "modality_dims";
    for (int d : ds.modality_dims) out << " " << d;
    out << "\n";
    out << "records " << ds.records.size() << "\n";
    for (const auto& r : ds.records) {
        out << r.sample_id << " " << format_real(r.event_time) << " " << r.censored
            << " " << r.time_bin;
        for (const auto& block : r.modality_blocks)
            for (double v : block) out << " " << format_real(v);
        out << "\n";
    }
    return out.str();
}

inline Dataset read_dataset(const std::filesystem::path& path) {
    const auto lines = ioutil::read_lines(path);
    const std::string p = path.string();
    ioutil::expect_header(lines, "protosurv_dataset", p);
    if (lines.size() < 3) throw DataError(p + ": truncated dataset file");

    Dataset ds;
    {
        const auto toks = ioutil::split_tokens(lines[1]);
        if (toks.size() < 2 || toks[0] != "modality_dims")
            throw DataError(ioutil::where(p, 2) + ": expected 'modality_dims <d...>'");
        for (std::size_t i = 1; i < toks.size(); ++i) {
            const int d = static_cast<int>(ioutil::parse_int(toks[i], ioutil::where(p, 2)));
            if (d <= 0) throw DataError(ioutil::where(p, 2) + ": modality dim must be positive");
            ds.modality_dims.push_back(d);
        }
    }
    std::size_t expected_records = 0;
    {
        const auto toks = ioutil::split_tokens(lines[2]);
        if (toks.size() != 2 || toks[0] != "records")
            throw DataError(ioutil::where(p, 3) + ": expected 'records <n>'");
        expected_records =
            static_cast<std::size_t>(ioutil::parse_int(toks[1], ioutil::where(p, 3)));
    }
    std::size_t n_fields = 4;
    for (int d : ds.modality_dims) n_fields += static_cast<std::size_t>(d);

    for (std::size_t i = 3; i < lines.size(); ++i) {
        const auto toks = ioutil::split_tokens(lines[i]);
        if (toks.empty()) continue;
        const std::string ctx = ioutil::where(p, i + 1);
        if (toks.size() != n_fields)
            throw DataError(ctx + ": expected " + std::to_string(n_fields) +
                            " fields, got " + std::to_string(toks.size()));
        FeatureRecord r;
        r.sample_id = toks[0];
        r.event_time = ioutil::parse_real(toks[1], ctx);
        if (r.event_time < 0.0) throw DataError(ctx + ": negative event_time");
        const long long cs = ioutil::parse_int(toks[2], ctx);
        if (cs != 0 && cs != 1) throw DataError(ctx + ": censored flag must be 0 or 1");
        r.censored = static_cast<int>(cs);
        r.time_bin = static_cast<int>(ioutil::parse_int(toks[3], ctx));
        if (r.time_bin < -1) throw DataError(ctx + ": time_bin must be >= -1");
        std::size_t tok_idx = 4;
        for (int d : ds.modality_dims) {
            Vec block(static_cast<std::size_t>(d));
            for (double& v : block) v = ioutil::parse_real(toks[tok_idx++], ctx);
            r.modality_blocks.push_back(std::move(block));
        }
        ds.records.push_back(std::move(r));
    }
    if (ds.records.size() != expected_records)
        throw DataError(p + ": header announced " + std::to_string(expected_records) +
                        " records, found " + std::to_string(ds.records.size()));
    return ds;
}

inline void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
    ioutil::write_text(path, emit_dataset(ds));
}

// ------------------------------------------------------------- bin edges

inline std::string emit_bin_edges(const Vec& edges) {
    std::ostringstream out;
    out << "protosurv_bins v1\n";
    out << "time_bins " << (edges.empty() ? 0 : edges.size() - 1) << "\n";
    out << "edges";
    for (double e : edges) out << " " << format_real(e);
    out << "\n";
    return out.str();
}

inline Vec read_bin_edges(const std::filesystem::path& path) {
    const auto lines = ioutil::read_lines(path);
    const std::string p = path.string();
    ioutil::expect_header(lines, "protosurv_bins", p);
    if (lines.size() < 3) throw DataError(p + ": truncated bins file");
    const auto toks = ioutil::split_tokens(lines[2]);
    if (toks.size() < 2 || toks[0] != "edges")
        throw DataError(ioutil::where(p, 3) + ": expected 'edges <values>'");
    Vec edges;
    for (std::size_t i = 1; i < toks.size(); ++i)
        edges.push_back(ioutil::parse_real(toks[i], ioutil::where(p, 3)));
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (edges[i] < edges[i - 1])
            throw DataError(p + ": edges not ascending");
    return edges;
}

inline void write_bin_edges(const std::filesystem::path& path, const Vec& edges) {
    ioutil::write_text(path, emit_bin_edges(edges));
}

// --------------------------------------------------------------- library

inline std::string emit_library(const PrototypeLibrary& lib) {
    std::ostringstream out;
    out << "protosurv_library v1\n";
    out << "version " << lib.version << "\n";
    out << "dim " << lib.dim << "\n";
    out << "num_classes " << lib.num_classes << "\n";
    out << "typical_per_class " << lib.typical_per_class << "\n";
    out << "wandering_per_class " << lib.wandering_per_class << "\n";
    out << "normalization " << to_string(lib.normalization) << "\n";
    out << "config_hash " << (lib.config_hash.empty() ? "-" : lib.config_hash) << "\n";
    for (int c = 0; c < lib.num_classes; ++c) {
        out << "center " << c;
        for (double v : lib.class_centers[static_cast<std::size_t>(c)])
            out << " " << format_real(v);
        out << "\n";
    }
    auto emit_entry = [&](const PrototypeEntry& e, int slot) {
        ProvenanceRecord prov;
        if (auto it = lib.provenance.find(e.id); it != lib.provenance.end())
            prov = it->second;
        out << "proto " << e.id << " " << e.class_index << " " << to_string(e.kind)
            << " " << slot << " " << prov.creation_epoch << " " << prov.update_count
            << " " << format_real(e.residual_weight) << " " << e.sources.size();
        for (const auto& s : e.sources)
            out << " " << s.sample_id << " " << format_real(s.weight);
        for (double v : e.vector) out << " " << format_real(v);
        out << "\n";
    };
    for (int c = 0; c < lib.num_classes; ++c)
        for (int s = 0; s < static_cast<int>(lib.typical[c].size()); ++s)
            emit_entry(lib.typical[c][s], s);
    for (int c = 0; c < lib.num_classes; ++c)
        for (int s = 0; s < static_cast<int>(lib.wandering[c].size()); ++s)
            emit_entry(lib.wandering[c][s], s);
    return out.str();
}

inline PrototypeLibrary read_library(const std::filesystem::path& path) {
    const auto lines = ioutil::read_lines(path);
    const std::string p = path.string();
    ioutil::expect_header(lines, "protosurv_library", p);
    if (lines.size() < 8) throw DataError(p + ": truncated library header");

    PrototypeLibrary lib;
    std::size_t i = 1;
    auto header_int = [&](const char* key) {
        const auto toks = ioutil::split_tokens(lines.at(i));
        const std::string ctx = ioutil::where(p, i + 1);
        if (toks.size() != 2 || toks[0] != key)
            throw DataError(ctx + ": expected '" + key + " <value>'");
        ++i;
        return ioutil::parse_int(toks[1], ctx);
    };
    lib.version = static_cast<std::uint64_t>(header_int("version"));
    lib.dim = static_cast<int>(header_int("dim"));
    lib.num_classes = static_cast<int>(header_int("num_classes"));
    lib.typical_per_class = static_cast<int>(header_int("typical_per_class"));
    lib.wandering_per_class = static_cast<int>(header_int("wandering_per_class"));
    {
        const auto toks = ioutil::split_tokens(lines.at(i));
        if (toks.size() != 2 || toks[0] != "normalization")
            throw DataError(ioutil::where(p, i + 1) + ": expected 'normalization <policy>'");
        lib.normalization = normalization_policy_from_string(toks[1]);
        ++i;
    }
    {
        const auto toks = ioutil::split_tokens(lines.at(i));
        if (toks.size() != 2 || toks[0] != "config_hash")
            throw DataError(ioutil::where(p, i + 1) + ": expected 'config_hash <hex>'");
        lib.config_hash = toks[1] == "-" ? "" : toks[1];
        ++i;
    }
    lib.typical.resize(static_cast<std::size_t>(lib.num_classes));
    lib.wandering.resize(static_cast<std::size_t>(lib.num_classes));
    lib.class_centers.resize(static_cast<std::size_t>(lib.num_classes));

    for (; i < lines.size(); ++i) {
        const auto toks = ioutil::split_tokens(lines[i]);
        if (toks.empty()) continue;
        const std::string ctx = ioutil::where(p, i + 1);
        if (toks[0] == "center") {
            if (static_cast<int>(toks.size()) != 2 + lib.dim)
                throw DataError(ctx + ": center line has wrong field count");
            const int c = static_cast<int>(ioutil::parse_int(toks[1], ctx));
            if (c < 0 || c >= lib.num_classes) throw DataError(ctx + ": center class out of range");
            Vec center(static_cast<std::size_t>(lib.dim));
            for (int d = 0; d < lib.dim; ++d)
                center[static_cast<std::size_t>(d)] =
                    ioutil::parse_real(toks[static_cast<std::size_t>(2 + d)], ctx);
            lib.class_centers[static_cast<std::size_t>(c)] = std::move(center);
        } else if (toks[0] == "proto") {
            if (toks.size() < 9) throw DataError(ctx + ": truncated proto line");
            PrototypeEntry e;
            e.id = toks[1];
            e.class_index = static_cast<int>(ioutil::parse_int(toks[2], ctx));
            e.kind = prototype_kind_from_string(toks[3]);
            const int slot = static_cast<int>(ioutil::parse_int(toks[4], ctx));
            ProvenanceRecord prov;
            prov.creation_epoch = static_cast<int>(ioutil::parse_int(toks[5], ctx));
            prov.update_count = static_cast<int>(ioutil::parse_int(toks[6], ctx));
            e.residual_weight = ioutil::parse_real(toks[7], ctx);
            const auto n_src = static_cast<std::size_t>(ioutil::parse_int(toks[8], ctx));
            std::size_t t = 9;
            if (toks.size() != 9 + 2 * n_src + static_cast<std::size_t>(lib.dim))
                throw DataError(ctx + ": proto line has wrong field count");
            for (std::size_t s = 0; s < n_src; ++s) {
                SourceRef src;
                src.sample_id = toks[t++];
                src.weight = ioutil::parse_real(toks[t++], ctx);
                e.sources.push_back(std::move(src));
            }
            e.vector.resize(static_cast<std::size_t>(lib.dim));
            for (int d = 0; d < lib.dim; ++d) e.vector[static_cast<std::size_t>(d)] =
                ioutil::parse_real(toks[t++], ctx);
            if (e.class_index < 0 || e.class_index >= lib.num_classes)
                throw DataError(ctx + ": class index out of range");
            auto& bank = e.kind == PrototypeKind::typical
                             ? lib.typical[static_cast<std::size_t>(e.class_index)]
                             : lib.wandering[static_cast<std::size_t>(e.class_index)];
            if (slot != static_cast<int>(bank.size()))
                throw DataError(ctx + ": prototype slots out of order");
            lib.provenance[e.id] = prov;
            bank.push_back(std::move(e));
        } else {
            throw DataError(ctx + ": unknown record '" + toks[0] + "'");
        }
    }
    detail::rebuild_index(lib);
    return lib;
}

inline void write_library(const std::filesystem::path& path, const PrototypeLibrary& lib) {
    ioutil::write_text(path, emit_library(lib));
}

}  // namespace protosurv
