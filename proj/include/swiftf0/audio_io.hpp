#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "errors.hpp"

namespace swiftf0 {

inline constexpr double kPitchFloorHz = 46.875;
inline constexpr double kPitchCeilHz = 2093.75;
inline constexpr double kDefaultHopSeconds = 0.016;

/// Mono audio, amplitudes nominally in [-1, +1].
struct AudioBuffer {
    std::vector<double> samples;
    int sample_rate_hz = 16000;

    double duration_seconds() const noexcept {
        return static_cast<double>(samples.size()) / sample_rate_hz;
    }
    bool operator==(const AudioBuffer&) const = default;
};

struct ContourFrame {
    std::optional<double> f0_hz;
    double confidence = 0.0;
    bool voiced = false;
    bool operator==(const ContourFrame&) const = default;
};

/// Per-frame pitch track on a uniform hop grid. Frame i sits at i * hop_seconds,
/// which is the start of the analysis window it was computed from.
struct PitchContour {
    double hop_seconds = kDefaultHopSeconds;
    std::vector<ContourFrame> frames;

    double time_of(std::size_t i) const noexcept { return static_cast<double>(i) * hop_seconds; }
    std::size_t size() const noexcept { return frames.size(); }
};

/// Throws ArgumentError when a frame breaks the contour invariants.
inline void validate_contour(const PitchContour& c, double tolerance = 1e-6) {
    if (!(c.hop_seconds > 0.0)) throw ArgumentError("hop_seconds must be positive");
    for (std::size_t i = 0; i < c.frames.size(); ++i) {
        const auto& f = c.frames[i];
        if (!(f.confidence >= -tolerance && f.confidence <= 1.0 + tolerance))
            throw ArgumentError("confidence outside [0,1] at frame " + std::to_string(i));
        if (f.f0_hz && !(*f.f0_hz > 0.0 && std::isfinite(*f.f0_hz)))
            throw ArgumentError("non-positive f0 at frame " + std::to_string(i));
        if (f.voiced) {
            if (!f.f0_hz) throw ArgumentError("voiced frame without f0 at frame " + std::to_string(i));
            if (*f.f0_hz < kPitchFloorHz - tolerance || *f.f0_hz > kPitchCeilHz + tolerance)
                throw ArgumentError("voiced f0 outside pitch range at frame " + std::to_string(i));
        }
    }
}

// ---------------------------------------------------------------------------
// WAV

enum class WavEncoding { pcm16, float32 };

namespace detail {

inline std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
inline std::uint32_t le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline void put16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}
inline void put32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

} // namespace detail

/// Parses an in-memory RIFF/WAVE image. Only mono PCM16 and IEEE float32 are
/// accepted; anything else is rejected instead of converted.
inline AudioBuffer decode_wav(const std::string& bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::size_t n = bytes.size();
    if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
        throw FormatError("not a RIFF/WAVE file");

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= n) {
        const unsigned char* chunk = p + pos;
        const std::uint32_t len = detail::le32(chunk + 4);
        if (pos + 8 + static_cast<std::size_t>(len) > n) throw FormatError("chunk runs past end of file");
        const unsigned char* body = chunk + 8;
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (len < 16) throw FormatError("fmt chunk too short");
            format = detail::le16(body);
            channels = detail::le16(body + 2);
            rate = detail::le32(body + 4);
            bits = detail::le16(body + 14);
            if (format == 0xFFFE) {
                if (len < 40) throw FormatError("extensible fmt chunk too short");
                format = detail::le16(body + 24);  // first two bytes of the subformat GUID
            }
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = body;
            data_len = len;
        }
        pos += 8 + len + (len & 1u);
    }
    if (!have_fmt) throw FormatError("missing fmt chunk");
    if (data == nullptr) throw FormatError("missing data chunk");
    if (channels != 1) throw UnsupportedError(std::to_string(channels) + " channels; only mono is accepted");
    if (rate == 0) throw FormatError("zero sample rate");

    AudioBuffer buf;
    buf.sample_rate_hz = static_cast<int>(rate);
    if (format == 1 && bits == 16) {
        if (data_len % 2 != 0) throw FormatError("odd PCM16 data length");
        buf.samples.resize(data_len / 2);
        for (std::size_t i = 0; i < buf.samples.size(); ++i) {
            const auto v = static_cast<std::int16_t>(detail::le16(data + 2 * i));
            buf.samples[i] = static_cast<double>(v) / 32768.0;
        }
    } else if (format == 3 && bits == 32) {
        if (data_len % 4 != 0) throw FormatError("float32 data length not a multiple of 4");
        buf.samples.resize(data_len / 4);
        for (std::size_t i = 0; i < buf.samples.size(); ++i) {
            const float v = std::bit_cast<float>(detail::le32(data + 4 * i));
            if (!std::isfinite(v) || v < -1.0f || v > 1.0f)
                throw FormatError("float sample outside [-1,+1] at index " + std::to_string(i));
            buf.samples[i] = v;
        }
    } else {
        throw UnsupportedError("encoding format=" + std::to_string(format) + " bits=" + std::to_string(bits));
    }
    return buf;
}

inline AudioBuffer read_wav(const std::filesystem::path& path) { return decode_wav(detail::read_file(path)); }

inline std::string encode_wav(const AudioBuffer& buf, WavEncoding enc = WavEncoding::pcm16) {
    if (buf.sample_rate_hz <= 0) throw ArgumentError("sample rate must be positive");
    const std::uint16_t bits = enc == WavEncoding::pcm16 ? 16 : 32;
    const std::uint16_t block = bits / 8;
    const auto data_len = static_cast<std::uint32_t>(buf.samples.size() * block);

    std::string out;
    out.reserve(44 + data_len);
    out += "RIFF";
    detail::put32(out, 36 + data_len);
    out += "WAVEfmt ";
    detail::put32(out, 16);
    detail::put16(out, enc == WavEncoding::pcm16 ? 1 : 3);
    detail::put16(out, 1);
    detail::put32(out, static_cast<std::uint32_t>(buf.sample_rate_hz));
    detail::put32(out, static_cast<std::uint32_t>(buf.sample_rate_hz) * block);
    detail::put16(out, block);
    detail::put16(out, bits);
    out += "data";
    detail::put32(out, data_len);
    for (double s : buf.samples) {
        if (!std::isfinite(s)) throw ArgumentError("non-finite sample");
        const double c = std::clamp(s, -1.0, 1.0);
        if (enc == WavEncoding::pcm16) {
            const double q = std::clamp(std::round(c * 32768.0), -32768.0, 32767.0);
            detail::put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
        } else {
            detail::put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(c)));
        }
    }
    return out;
}

inline void write_wav(const AudioBuffer& buf, const std::filesystem::path& path,
                      WavEncoding enc = WavEncoding::pcm16) {
    detail::write_file(path, encode_wav(buf, enc));
}

// ---------------------------------------------------------------------------
// Resampling

/// Linear interpolation onto a new rate. Output sample j sits at time j / target_hz.
inline AudioBuffer resample_linear(const AudioBuffer& buf, int target_hz) {
    if (target_hz <= 0) throw ArgumentError("target rate must be positive");
    if (buf.samples.empty()) throw ArgumentError("cannot resample an empty buffer");
    if (target_hz == buf.sample_rate_hz) return buf;

    const double ratio = static_cast<double>(buf.sample_rate_hz) / target_hz;
    const auto out_len = static_cast<std::size_t>(
        std::llround(static_cast<double>(buf.samples.size()) * target_hz / buf.sample_rate_hz));
    AudioBuffer out;
    out.sample_rate_hz = target_hz;
    out.samples.resize(std::max<std::size_t>(out_len, 1));
    const std::size_t last = buf.samples.size() - 1;
    for (std::size_t j = 0; j < out.samples.size(); ++j) {
        const double pos = static_cast<double>(j) * ratio;
        const auto i = static_cast<std::size_t>(pos);
        if (i >= last) {
            out.samples[j] = buf.samples[last];
            continue;
        }
        const double frac = pos - static_cast<double>(i);
        out.samples[j] = buf.samples[i] + frac * (buf.samples[i + 1] - buf.samples[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Contour CSV

inline constexpr const char* kContourHeader = "time_sec,f0_hz,confidence,voiced";

inline std::string format_contour_csv(const PitchContour& c) {
    std::ostringstream os;
    os << kContourHeader << '\n' << std::fixed << std::setprecision(6);
    for (std::size_t i = 0; i < c.frames.size(); ++i) {
        const auto& f = c.frames[i];
        os << c.time_of(i) << ',';
        if (f.f0_hz) os << *f.f0_hz;
        os << ',' << f.confidence << ',' << (f.voiced ? 1 : 0) << '\n';
    }
    return os.str();
}

inline void write_contour_csv(const PitchContour& c, const std::filesystem::path& path) {
    detail::write_file(path, format_contour_csv(c));
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline double parse_double(const std::string& s, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw FormatError(std::string("trailing characters in ") + what);
        return v;
    } catch (const std::logic_error&) {
        throw FormatError(std::string("cannot parse ") + what + " '" + s + "'");
    }
}

} // namespace detail

/// Parses contour CSV text. The hop is recovered from the time column; files
/// with fewer than two rows fall back to `default_hop`.
inline PitchContour parse_contour_csv(const std::string& text, double default_hop = kDefaultHopSeconds) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty contour file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_csv_line(line);
    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* name : {"time_sec", "f0_hz", "confidence", "voiced"})
        if (!col.count(name)) throw FormatError(std::string("missing column ") + name);

    std::vector<double> times;
    PitchContour out;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) throw FormatError("row has wrong number of cells: " + line);
        times.push_back(detail::parse_double(cells[col["time_sec"]], "time_sec"));
        ContourFrame f;
        if (const auto& s = cells[col["f0_hz"]]; !s.empty()) f.f0_hz = detail::parse_double(s, "f0_hz");
        f.confidence = detail::parse_double(cells[col["confidence"]], "confidence");
        const auto& v = cells[col["voiced"]];
        if (v == "1") f.voiced = true;
        else if (v == "0") f.voiced = false;
        else throw FormatError("voiced must be 0 or 1, got '" + v + "'");
        out.frames.push_back(f);
    }

    out.hop_seconds = times.size() >= 2 ? times.back() / static_cast<double>(times.size() - 1) : default_hop;
    for (std::size_t i = 0; i < times.size(); ++i)
        if (std::abs(times[i] - out.time_of(i)) > 1e-5) throw FormatError("frames are not uniformly spaced");
    try {
        validate_contour(out);
    } catch (const ArgumentError& e) {
        throw FormatError(e.what());
    }
    return out;
}

inline PitchContour read_contour_csv(const std::filesystem::path& path, double default_hop = kDefaultHopSeconds) {
    return parse_contour_csv(detail::read_file(path), default_hop);
}

} // namespace swiftf0
