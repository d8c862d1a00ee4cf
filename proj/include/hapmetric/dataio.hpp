#pragma once

// Recording files, dataset directories, feature CSVs and the synthetic
// band-noise corpus.
//
// Recording file:
//     # sample_rate_hz=<float>
//     ax,ay,az            one sample per line
//
// Dataset directory: <root>/<class label>/<sample>.csv, read in sorted order.
//
// Feature CSV: header `label,a1,...,aN`, then one row per sample.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hapmetric/config.hpp"
#include "hapmetric/error.hpp"
#include "hapmetric/feature_set.hpp"
#include "hapmetric/fft.hpp"
#include "hapmetric/random.hpp"
#include "hapmetric/signal.hpp"

namespace hapmetric {

namespace fs = std::filesystem;

inline constexpr std::string_view kSampleRateHeader = "# sample_rate_hz=";

inline Signal read_recording(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput(source + ": empty file, missing sample-rate header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind(kSampleRateHeader, 0) != 0) {
        throw InvalidInput(source + ":1: missing '# sample_rate_hz=<float>' header");
    }
    const double rate =
        detail::parse_double(std::string_view(line).substr(kSampleRateHeader.size()), source + ":1: sample rate");
    if (!std::isfinite(rate) || rate <= 0.0) {
        throw InvalidInput(source + ":1: sample rate must be positive and finite");
    }

    std::vector<Sample3> samples;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string body = detail::trim(line);
        if (body.empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        Sample3 s{};
        std::size_t start = 0;
        for (std::size_t a = 0; a < 3; ++a) {
            const auto comma = body.find(',', start);
            const bool last = (a == 2);
            if (last != (comma == std::string::npos)) {
                throw InvalidInput(where + ": expected 3 comma-separated values");
            }
            const auto field = std::string_view(body).substr(start, last ? std::string::npos : comma - start);
            s[a] = detail::parse_double(field, where);
            if (!std::isfinite(s[a])) throw InvalidInput(where + ": non-finite value");
            start = comma + 1;
        }
        samples.push_back(s);
    }
    try {
        return Signal(std::move(samples), rate);
    } catch (const InvalidInput& e) {
        throw InvalidInput(source + ": " + e.what());
    }
}

inline Signal read_recording(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open recording '" + path.string() + "'");
    return read_recording(in, path.string());
}

inline void write_recording(std::ostream& out, const Signal& signal) {
    out << kSampleRateHeader << detail::format_double(signal.sample_rate()) << '\n';
    for (const auto& s : signal.samples()) {
        out << detail::format_double(s[0]) << ',' << detail::format_double(s[1]) << ','
            << detail::format_double(s[2]) << '\n';
    }
}

inline void write_recording(const fs::path& path, const Signal& signal) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write recording '" + path.string() + "'");
    write_recording(out, signal);
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

struct DatasetEntry {
    std::string label;
    Signal signal;
    std::string source;  ///< file path, or "synth:<class>/<index>"
};

struct Dataset {
    std::vector<DatasetEntry> entries;
    std::string provenance;

    std::size_t size() const { return entries.size(); }
};

/// Reads <root>/<class>/<sample>.csv; classes and files in sorted order.
inline Dataset load_dataset(const fs::path& root) {
    if (!fs::is_directory(root)) throw IoError("dataset root '" + root.string() + "' is not a directory");
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) class_dirs.push_back(e.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());

    Dataset ds;
    ds.provenance = root.string();
    for (const auto& dir : class_dirs) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        const std::string label = dir.filename().string();
        for (const auto& f : files) ds.entries.push_back({label, read_recording(f), f.string()});
    }
    if (ds.entries.empty()) {
        throw InvalidInput("dataset root '" + root.string() + "' contains no <class>/<sample>.csv recordings");
    }
    return ds;
}

inline void save_dataset(const Dataset& ds, const fs::path& root) {
    fs::create_directories(root);
    std::map<std::string, std::size_t> counters;
    for (const auto& entry : ds.entries) {
        detail::require(!entry.label.empty(), "save_dataset: empty class label");
        const fs::path dir = root / entry.label;
        fs::create_directories(dir);
        const std::size_t index = counters[entry.label]++;
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%04zu.csv", index);
        write_recording(dir / name, entry.signal);
    }
}

inline void write_feature_csv(std::ostream& out, const FeatureSet& features) {
    out << "label";
    for (std::size_t j = 1; j <= features.dim(); ++j) out << ",a" << j;
    out << '\n';
    for (std::size_t i = 0; i < features.size(); ++i) {
        out << features.labels[i];
        for (std::size_t j = 0; j < features.dim(); ++j) {
            out << ',' << detail::format_double(features.values(static_cast<Eigen::Index>(i),
                                                                static_cast<Eigen::Index>(j)));
        }
        out << '\n';
    }
}

inline void write_feature_csv(const fs::path& path, const FeatureSet& features) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write feature CSV '" + path.string() + "'");
    write_feature_csv(out, features);
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline FeatureSet read_feature_csv(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput(source + ": empty feature CSV");
    const std::string header = detail::trim(line);
    if (header.rfind("label,", 0) != 0) throw InvalidInput(source + ":1: header must start with 'label,'");
    const std::size_t dim = static_cast<std::size_t>(std::count(header.begin(), header.end(), ','));

    std::vector<std::string> labels;
    std::vector<double> flat;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string body = detail::trim(line);
        if (body.empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        std::vector<std::string_view> fields;
        std::size_t start = 0;
        while (true) {
            const auto comma = body.find(',', start);
            fields.push_back(std::string_view(body).substr(start, comma == std::string::npos ? std::string::npos
                                                                                           : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() != dim + 1) {
            throw InvalidInput(where + ": expected " + std::to_string(dim + 1) + " fields");
        }
        labels.emplace_back(fields[0]);
        for (std::size_t j = 1; j <= dim; ++j) {
            const double v = detail::parse_double(fields[j], where);
            if (!std::isfinite(v)) throw InvalidInput(where + ": non-finite feature value");
            flat.push_back(v);
        }
    }
    if (labels.empty()) throw InvalidInput(source + ": feature CSV has no rows");

    FeatureSet set;
    set.labels = std::move(labels);
    set.values.resize(static_cast<Eigen::Index>(set.labels.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < set.labels.size(); ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            set.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = flat[i * dim + j];
        }
    }
    return set;
}

inline FeatureSet read_feature_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open feature CSV '" + path.string() + "'");
    return read_feature_csv(in, path.string());
}

/// One Gaussian noise band of a class envelope: amplitude gain at `center`
/// falling off with standard deviation `width` (both in Hz).
struct NoiseBand {
    double center = 0.0;
    double width = 0.0;
    double gain = 1.0;
};

struct ClassEnvelope {
    std::string label;
    std::vector<NoiseBand> bands;
};

struct SynthSpec {
    std::size_t n_classes = 10;
    std::size_t samples_per_class = 10;
    double sample_rate = 4000.0;
    double duration = 1.0;
    std::uint64_t rng_seed = 1;

    // default envelope layout (used when `classes` is empty)
    std::uint64_t envelope_seed = 7;
    double band_min_hz = 10.0;
    double band_max_hz = 900.0;
    double band_width_ratio = 0.15;  ///< band width = ratio * center
    double secondary_gain = 0.5;     ///< gain of each class's random second band

    // per-sample variation
    double gain_jitter = 0.25;   ///< log-normal sd of overall class-band gain
    double freq_jitter = 0.03;   ///< log-normal sd of a common frequency scaling
    double noise_floor = 0.01;   ///< sd of independent white noise per axis

    /// Band shared by every class with a strongly varying per-sample gain
    /// (log-uniform over [gain / spread, gain * spread]); gain 0 disables it.
    NoiseBand shared_band{600.0, 60.0, 0.0};
    double shared_gain_spread = 4.0;

    /// Explicit envelopes; overrides the default layout and n_classes.
    std::vector<ClassEnvelope> classes;

    void validate() const {
        detail::require(effective_classes() >= 1, "synth spec: n_classes must be >= 1");
        detail::require(samples_per_class >= 1, "synth spec: samples_per_class must be >= 1");
        detail::require(sample_rate > 0.0 && duration > 0.0, "synth spec: sample_rate and duration must be positive");
        detail::require(duration * sample_rate >= 64.0, "synth spec: duration * sample_rate must be >= 64 samples");
        detail::require(band_min_hz > 0.0 && band_max_hz >= band_min_hz, "synth spec: invalid band range");
        detail::require(band_width_ratio > 0.0, "synth spec: band_width_ratio must be positive");
        detail::require(gain_jitter >= 0.0 && freq_jitter >= 0.0 && noise_floor >= 0.0,
                        "synth spec: jitters and noise floor must be >= 0");
        detail::require(shared_gain_spread >= 1.0, "synth spec: shared_gain_spread must be >= 1");
        for (const auto& c : classes) {
            detail::require(!c.label.empty(), "synth spec: empty class label");
            for (const auto& b : c.bands) {
                detail::require(b.center >= 0.0 && b.width > 0.0 && b.gain >= 0.0,
                                "synth spec: class '" + c.label + "' has an invalid band");
            }
        }
    }

    std::size_t effective_classes() const { return classes.empty() ? n_classes : classes.size(); }
    std::size_t sample_count() const { return static_cast<std::size_t>(std::llround(duration * sample_rate)); }
};

/// The per-class envelopes synth_corpus will use: explicit ones if given,
/// otherwise primary bands spread geometrically over [band_min, band_max]
/// plus one secondary band per class at a seeded log-uniform position.
inline std::vector<ClassEnvelope> class_envelopes(const SynthSpec& spec) {
    if (!spec.classes.empty()) return spec.classes;
    std::vector<ClassEnvelope> out;
    Rng rng(spec.envelope_seed);
    const int digits = spec.n_classes > 100 ? 3 : 2;
    const double log_lo = std::log(spec.band_min_hz);
    const double log_hi = std::log(spec.band_max_hz);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        char label[32];
        std::snprintf(label, sizeof(label), "class_%0*zu", digits, c);
        const double t = spec.n_classes > 1 ? static_cast<double>(c) / static_cast<double>(spec.n_classes - 1) : 0.0;
        const double primary = std::exp(log_lo + t * (log_hi - log_lo));
        const double secondary = std::exp(rng.uniform(log_lo, log_hi));
        ClassEnvelope env{label, {}};
        env.bands.push_back({primary, spec.band_width_ratio * primary, 1.0});
        if (spec.secondary_gain > 0.0) {
            env.bands.push_back({secondary, spec.band_width_ratio * secondary, spec.secondary_gain});
        }
        out.push_back(std::move(env));
    }
    return out;
}

namespace detail {

inline std::uint64_t sample_seed(std::uint64_t seed, std::size_t cls, std::size_t index) {
    SplitMix64 sm(seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(cls) + 1)));
    std::uint64_t s = sm.next();
    SplitMix64 sm2(s + static_cast<std::uint64_t>(index));
    return sm2.next();
}

/// White noise shaped in the frequency domain by sum_b gain_b exp(-(f - c_b)^2 / (2 w_b^2)).
inline std::vector<double> band_noise(const std::vector<NoiseBand>& bands, std::size_t n, double sample_rate,
                                      Rng& rng) {
    std::vector<double> white(n);
    for (double& x : white) x = rng.normal();
    auto spectrum = fft::real_dft(white);
    const double df = sample_rate / static_cast<double>(n);
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
        const double f = static_cast<double>(k) * df;
        double h = 0.0;
        for (const auto& b : bands) {
            const double d = (f - b.center) / b.width;
            h += b.gain * std::exp(-0.5 * d * d);
        }
        spectrum[k] *= h;
    }
    return fft::inverse_real_dft(spectrum, n);
}

}  // namespace detail

/// Seeded synthetic corpus: every sample is band-filtered white noise
/// following its class envelope (with per-sample gain and frequency jitter),
/// spread over the three axes by a random unit mixing vector, plus an
/// independent noise floor per axis. Each sample has its own generator
/// derived from (rng_seed, class, index), so output is order independent.
inline Dataset synth_corpus(const SynthSpec& spec) {
    spec.validate();
    const auto envelopes = class_envelopes(spec);
    const std::size_t n = spec.sample_count();

    Dataset ds;
    ds.provenance = "synth:seed=" + std::to_string(spec.rng_seed);
    for (std::size_t c = 0; c < envelopes.size(); ++c) {
        for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
            Rng rng(detail::sample_seed(spec.rng_seed, c, i));
            const double gain = std::exp(spec.gain_jitter * rng.normal());
            const double stretch = std::exp(spec.freq_jitter * rng.normal());
            std::vector<NoiseBand> bands;
            for (const auto& b : envelopes[c].bands) {
                bands.push_back({b.center * stretch, b.width * stretch, b.gain * gain});
            }
            if (spec.shared_band.gain > 0.0) {
                const double spread = std::log(spec.shared_gain_spread);
                NoiseBand shared = spec.shared_band;
                shared.gain *= std::exp(rng.uniform(-spread, spread));
                bands.push_back(shared);
            }
            const auto source = detail::band_noise(bands, n, spec.sample_rate, rng);

            Eigen::Vector3d mix(rng.normal(), rng.normal(), rng.normal());
            if (mix.norm() == 0.0) mix = Eigen::Vector3d::UnitX();
            mix.normalize();
            std::vector<Sample3> samples(n);
            for (std::size_t t = 0; t < n; ++t) {
                for (std::size_t a = 0; a < 3; ++a) {
                    samples[t][a] = mix(static_cast<Eigen::Index>(a)) * source[t] + spec.noise_floor * rng.normal();
                }
            }
            ds.entries.push_back({envelopes[c].label, Signal(std::move(samples), spec.sample_rate),
                                  "synth:" + envelopes[c].label + "/" + std::to_string(i)});
        }
    }
    return ds;
}

/// Reads a synthesis spec from key/value text. Explicit envelopes are given
/// as `class.<label> = center:width:gain, center:width:gain, ...`.
inline SynthSpec parse_synth_spec(const KeyValues& kv) {
    kv.require_known({"n_classes", "samples_per_class", "sample_rate", "duration", "seed", "envelope_seed",
                      "band_min_hz", "band_max_hz", "band_width_ratio", "secondary_gain", "gain_jitter",
                      "freq_jitter", "noise_floor", "shared_center", "shared_width", "shared_gain",
                      "shared_gain_spread", "class."});
    SynthSpec s;
    s.n_classes = kv.get_unsigned("n_classes", s.n_classes);
    s.samples_per_class = kv.get_unsigned("samples_per_class", s.samples_per_class);
    s.sample_rate = kv.get_double("sample_rate", s.sample_rate);
    s.duration = kv.get_double("duration", s.duration);
    s.rng_seed = kv.get_unsigned("seed", s.rng_seed);
    s.envelope_seed = kv.get_unsigned("envelope_seed", s.envelope_seed);
    s.band_min_hz = kv.get_double("band_min_hz", s.band_min_hz);
    s.band_max_hz = kv.get_double("band_max_hz", s.band_max_hz);
    s.band_width_ratio = kv.get_double("band_width_ratio", s.band_width_ratio);
    s.secondary_gain = kv.get_double("secondary_gain", s.secondary_gain);
    s.gain_jitter = kv.get_double("gain_jitter", s.gain_jitter);
    s.freq_jitter = kv.get_double("freq_jitter", s.freq_jitter);
    s.noise_floor = kv.get_double("noise_floor", s.noise_floor);
    s.shared_band.center = kv.get_double("shared_center", s.shared_band.center);
    s.shared_band.width = kv.get_double("shared_width", s.shared_band.width);
    s.shared_band.gain = kv.get_double("shared_gain", s.shared_band.gain);
    s.shared_gain_spread = kv.get_double("shared_gain_spread", s.shared_gain_spread);

    for (const auto& [key, value] : kv.entries()) {
        if (key.rfind("class.", 0) != 0) continue;
        ClassEnvelope env{key.substr(6), {}};
        std::stringstream list(value);
        std::string item;
        while (std::getline(list, item, ',')) {
            const std::string band = detail::trim(item);
            const auto c1 = band.find(':');
            const auto c2 = c1 == std::string::npos ? c1 : band.find(':', c1 + 1);
            if (c2 == std::string::npos) {
                throw InvalidInput("synth spec: band '" + band + "' of " + key + " must be center:width:gain");
            }
            env.bands.push_back({detail::parse_double(band.substr(0, c1), key),
                                 detail::parse_double(band.substr(c1 + 1, c2 - c1 - 1), key),
                                 detail::parse_double(band.substr(c2 + 1), key)});
        }
        s.classes.push_back(std::move(env));
    }
    s.validate();
    return s;
}

}  // namespace hapmetric
