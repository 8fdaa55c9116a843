#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "frame.hpp"

namespace fastmra {

struct LoadedSequence {
  Sequence sequence;
  std::vector<std::string> warnings;
};

namespace detail {

struct RawLayout {
  int width = 0;
  int height = 0;
};

inline std::size_t frame_bytes(int w, int h) {
  const std::size_t cw = static_cast<std::size_t>((w + 1) / 2);
  const std::size_t ch = static_cast<std::size_t>((h + 1) / 2);
  return static_cast<std::size_t>(w) * static_cast<std::size_t>(h) + 2 * cw * ch;
}

// Center-crops a source plane of src_w x src_h down to dst_w x dst_h.
inline Plane crop_plane(const std::uint8_t* src, int src_w, int src_h, int dst_w,
                        int dst_h) {
  const int x0 = (src_w - dst_w) / 2;
  const int y0 = (src_h - dst_h) / 2;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(dst_w) * dst_h);
  for (int y = 0; y < dst_h; ++y)
    std::copy_n(src + static_cast<std::size_t>(y + y0) * src_w + x0, dst_w,
                out.begin() + static_cast<std::ptrdiff_t>(y) * dst_w);
  return Plane(dst_w, dst_h, std::move(out));
}

// Builds a block-aligned frame from one raw 4:2:0 payload.
inline Frame frame_from_raw(const std::uint8_t* data, int w, int h, int aw, int ah) {
  const int cw = (w + 1) / 2;
  const int chh = (h + 1) / 2;
  const std::uint8_t* yp = data;
  const std::uint8_t* up = yp + static_cast<std::size_t>(w) * h;
  const std::uint8_t* vp = up + static_cast<std::size_t>(cw) * chh;
  return Frame(crop_plane(yp, w, h, aw, ah), crop_plane(up, cw, chh, aw / 2, ah / 2),
               crop_plane(vp, cw, chh, aw / 2, ah / 2));
}

inline int align_down16(int v) { return v - v % 16; }

inline void check_alignable(int w, int h) {
  if (align_down16(w) == 0 || align_down16(h) == 0)
    throw FormatError("frame " + std::to_string(w) + "x" + std::to_string(h) +
                      " is smaller than one 16x16 block");
}

inline std::string crop_warning(int w, int h, int aw, int ah) {
  return "center-cropped " + std::to_string(w) + "x" + std::to_string(h) + " to " +
         std::to_string(aw) + "x" + std::to_string(ah);
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

inline bool is_420_tag(const std::string& c) {
  return c == "420" || c == "420jpeg" || c == "420paldv" || c == "420mpeg2";
}

}  // namespace detail

// Reads a YUV4MPEG2 file. Only 8-bit 4:2:0 is accepted. Frames whose size is
// not a multiple of 16 are center-cropped and a warning is recorded.
inline LoadedSequence load_y4m(const std::filesystem::path& path) {
  const std::vector<char> bytes = detail::read_file(path);
  const auto nl = std::find(bytes.begin(), bytes.end(), '\n');
  if (nl == bytes.end()) throw FormatError(path.string() + ": missing header line");
  const std::string header(bytes.begin(), nl);
  std::istringstream tokens(header);
  std::string magic;
  tokens >> magic;
  if (magic != "YUV4MPEG2") throw FormatError(path.string() + ": bad magic '" + magic + "'");

  int w = 0, h = 0;
  double rate = 30.0;
  std::string tok;
  while (tokens >> tok) {
    const char tag = tok[0];
    const std::string val = tok.substr(1);
    try {
      switch (tag) {
        case 'W': w = std::stoi(val); break;
        case 'H': h = std::stoi(val); break;
        case 'F': {
          const auto colon = val.find(':');
          if (colon == std::string::npos) throw FormatError("frame rate without ':'");
          const double num = std::stod(val.substr(0, colon));
          const double den = std::stod(val.substr(colon + 1));
          if (den <= 0) throw FormatError("zero frame-rate denominator");
          rate = num / den;
          break;
        }
        case 'C':
          if (!detail::is_420_tag(val))
            throw UnsupportedFormat(path.string() + ": unsupported chroma format C" + val);
          break;
        default: break;  // I, A, X carry nothing we need
      }
    } catch (const std::invalid_argument&) {
      throw FormatError(path.string() + ": malformed header token '" + tok + "'");
    } catch (const std::out_of_range&) {
      throw FormatError(path.string() + ": malformed header token '" + tok + "'");
    }
  }
  if (w <= 0 || h <= 0) throw FormatError(path.string() + ": header lacks W/H");
  detail::check_alignable(w, h);
  const int aw = detail::align_down16(w);
  const int ah = detail::align_down16(h);

  LoadedSequence out;
  out.sequence.frame_rate = rate;
  if (aw != w || ah != h) out.warnings.push_back(detail::crop_warning(w, h, aw, ah));

  const std::size_t payload = detail::frame_bytes(w, h);
  std::size_t pos = static_cast<std::size_t>(nl - bytes.begin()) + 1;
  while (pos < bytes.size()) {
    const auto line_end = std::find(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                     bytes.end(), '\n');
    if (line_end == bytes.end())
      throw TruncatedData(path.string() + ": frame marker without newline");
    const std::string marker(bytes.begin() + static_cast<std::ptrdiff_t>(pos), line_end);
    if (marker.rfind("FRAME", 0) != 0)
      throw FormatError(path.string() + ": expected FRAME marker, got '" + marker + "'");
    pos = static_cast<std::size_t>(line_end - bytes.begin()) + 1;
    if (bytes.size() - pos < payload)
      throw TruncatedData(path.string() + ": frame " +
                          std::to_string(out.sequence.frames.size()) + " is truncated");
    out.sequence.frames.push_back(detail::frame_from_raw(
        reinterpret_cast<const std::uint8_t*>(bytes.data() + pos), w, h, aw, ah));
    pos += payload;
  }
  if (out.sequence.frames.empty()) throw FormatError(path.string() + ": no frames");
  return out;
}

inline std::string y4m_header(const Sequence& seq) {
  std::string rate;
  const double r = seq.frame_rate;
  if (std::abs(r - std::round(r)) < 1e-9)
    rate = std::to_string(static_cast<long long>(std::llround(r))) + ":1";
  else
    rate = std::to_string(static_cast<long long>(std::llround(r * 1000.0))) + ":1000";
  return "YUV4MPEG2 W" + std::to_string(seq.width()) + " H" + std::to_string(seq.height()) +
         " F" + rate + " Ip A1:1 C420jpeg\n";
}

inline void save_y4m(const Sequence& seq, const std::filesystem::path& path) {
  if (seq.frames.empty()) throw PreconditionError("save_y4m: empty sequence");
  seq.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << y4m_header(seq);
  for (const Frame& f : seq.frames) {
    out << "FRAME\n";
    for (int p = 0; p < 3; ++p) {
      auto s = f.plane(p).samples();
      out.write(reinterpret_cast<const char*>(s.data()), static_cast<std::streamsize>(s.size()));
    }
  }
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

// Headerless planar 4:2:0 import with explicit geometry.
inline LoadedSequence load_raw_yuv(const std::filesystem::path& path, int width, int height,
                                   int count) {
  if (width <= 0 || height <= 0 || count <= 0)
    throw PreconditionError("raw yuv import needs positive width/height/count");
  detail::check_alignable(width, height);
  const std::vector<char> bytes = detail::read_file(path);
  const std::size_t payload = detail::frame_bytes(width, height);
  if (bytes.size() < payload * static_cast<std::size_t>(count))
    throw TruncatedData(path.string() + ": holds " + std::to_string(bytes.size() / payload) +
                        " frames, " + std::to_string(count) + " requested");
  const int aw = detail::align_down16(width);
  const int ah = detail::align_down16(height);
  LoadedSequence out;
  if (aw != width || ah != height)
    out.warnings.push_back(detail::crop_warning(width, height, aw, ah));
  for (int i = 0; i < count; ++i)
    out.sequence.frames.push_back(detail::frame_from_raw(
        reinterpret_cast<const std::uint8_t*>(bytes.data()) + payload * i, width, height, aw,
        ah));
  return out;
}

}  // namespace fastmra
