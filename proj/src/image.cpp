#include "seqadv/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "seqadv/errors.hpp"

namespace seqadv {

bool operator==(const Frame& a, const Frame& b) {
  return a.h == b.h && a.w == b.w && a.px == b.px;
}

void write_pgm(const std::filesystem::path& path, const Frame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "P5\n" << frame.w << " " << frame.h << "\n255\n";
  std::vector<unsigned char> bytes(frame.px.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::min(1.0, std::max(0.0, frame.px[i]));
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write: " + path.string());
}

Frame read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing frame file: " + path.string());

  std::string magic;
  in >> magic;
  if (magic != "P5") throw DataError("not a binary PGM (want P5): " + path.string());

  // Header tokens may be separated by whitespace and '#' comment lines.
  auto next_token = [&]() -> long {
    for (;;) {
      int c = in.peek();
      if (c == EOF) throw DataError("truncated PGM header: " + path.string());
      if (std::isspace(c)) {
        in.get();
        continue;
      }
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      long v;
      if (!(in >> v)) throw DataError("malformed PGM header: " + path.string());
      return v;
    }
  };

  const long w = next_token();
  const long h = next_token();
  const long maxval = next_token();
  if (w <= 0 || h <= 0 || maxval != 255)
    throw DataError("unsupported PGM geometry in " + path.string());
  in.get();  // single whitespace after maxval

  Frame f(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
  std::vector<unsigned char> bytes(f.px.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw DataError("truncated PGM payload: " + path.string());
  for (std::size_t i = 0; i < bytes.size(); ++i) f.px[i] = bytes[i] / 255.0;
  return f;
}

Tensor frame_to_tensor(const Frame& f) {
  Tensor t(Shape{1, f.h, f.w});
  std::copy(f.px.begin(), f.px.end(), t.data());
  return t;
}

Frame tensor_to_frame(const Tensor& t, std::size_t h, std::size_t w) {
  if (t.size() != h * w)
    throw ShapeError("tensor_to_frame: " + shape_str(t.shape()) + " does not hold " +
                     std::to_string(h * w) + " pixels");
  Frame f(h, w);
  std::copy(t.values().begin(), t.values().end(), f.px.begin());
  return f;
}

}  // namespace seqadv
