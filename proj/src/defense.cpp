#include "prepguard/defense.hpp"

#include <unistd.h>

#include <atomic>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "prepguard/codecs.hpp"
#include "prepguard/errors.hpp"
#include "prepguard/png_io.hpp"

namespace prepguard {

namespace {

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

ImageTensor run_extern(const Transform& t, const ImageTensor& img,
                       const ExternRegistry* extern_commands, int index) {
  if (!extern_commands)
    throw DefenseExecutionError("extern transform '" + t.tag +
                                    "' used but no extern commands are registered",
                                index);
  const auto it = extern_commands->find(t.tag);
  if (it == extern_commands->end())
    throw DefenseExecutionError("extern transform '" + t.tag + "' is not registered",
                                index);

  static std::atomic<unsigned> counter{0};
  const std::string stem =
      (std::filesystem::temp_directory_path() /
       ("prepguard_extern_" + std::to_string(::getpid()) + "_" +
        std::to_string(counter.fetch_add(1))))
          .string();
  const std::string in_path = stem + "_in.png";
  const std::string out_path = stem + "_out.png";
  write_png(in_path, img);

  std::string cmd = replace_all(it->second, "{in}", in_path);
  cmd = replace_all(cmd, "{out}", out_path);
  const int rc = std::system(cmd.c_str());

  ImageTensor out;
  std::string failure;
  if (rc != 0) {
    failure = "extern command exited with status " + std::to_string(rc);
  } else if (!std::filesystem::exists(out_path)) {
    failure = "extern command produced no output file";
  } else {
    out = read_png(out_path);
    if (!out.same_shape(img))
      failure = "extern command changed the image shape to " + out.shape_str();
  }
  std::error_code ec;
  std::filesystem::remove(in_path, ec);
  std::filesystem::remove(out_path, ec);
  if (!failure.empty()) throw DefenseExecutionError(failure, index);
  return out;
}

}  // namespace

DefenseSpec parse_defense_spec(const std::string& text) {
  DefenseSpec spec;
  std::size_t i = 0;
  const auto skip_ws = [&] {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  };
  skip_ws();
  while (i < text.size()) {
    const std::size_t tok_start = i;
    std::string word;
    while (i < text.size() && (std::isalnum(static_cast<unsigned char>(text[i])) ||
                               text[i] == '_'))
      word += text[i++];
    if (word.empty()) throw ParseError("expected a transform name", i);

    if (word == "fliplr") {
      spec.transforms.push_back({TransformKind::FlipLR, 0, ""});
    } else if (word == "fliptb") {
      spec.transforms.push_back({TransformKind::FlipTB, 0, ""});
    } else if (word == "none") {
      // contributes no transform
    } else if (word == "jpeg" || word == "webp") {
      skip_ws();
      if (i >= text.size() || text[i] != ':')
        throw ParseError("'" + word + "' needs a :QF argument", i);
      ++i;
      skip_ws();
      std::string digits;
      while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])))
        digits += text[i++];
      if (digits.empty()) throw ParseError("expected a quality factor", i);
      const int qf = std::stoi(digits);
      if (qf < 0 || qf > 100)
        throw ParseError("quality factor " + digits + " outside [0,100]", tok_start);
      spec.transforms.push_back(
          {word == "jpeg" ? TransformKind::JpegLike : TransformKind::WebpLike, qf, ""});
    } else if (word == "extern") {
      if (i >= text.size() || text[i] != ':')
        throw ParseError("'extern' needs a :TAG argument", i);
      ++i;
      std::string tag;
      while (i < text.size() && text[i] != ',' &&
             !std::isspace(static_cast<unsigned char>(text[i])))
        tag += text[i++];
      if (tag.empty()) throw ParseError("expected an extern tag", i);
      spec.transforms.push_back({TransformKind::Extern, 0, tag});
    } else {
      throw ParseError("unknown transform '" + word + "'", tok_start);
    }

    skip_ws();
    if (i < text.size()) {
      if (text[i] != ',') throw ParseError("expected ',' between transforms", i);
      ++i;
      skip_ws();
      if (i >= text.size()) throw ParseError("trailing ',' in defense spec", i);
    }
  }
  spec.name = format_defense_spec(spec);
  return spec;
}

std::string format_defense_spec(const DefenseSpec& spec) {
  if (spec.transforms.empty()) return "none";
  std::ostringstream os;
  bool first = true;
  for (const Transform& t : spec.transforms) {
    if (!first) os << ",";
    first = false;
    switch (t.kind) {
      case TransformKind::JpegLike: os << "jpeg:" << t.qf; break;
      case TransformKind::WebpLike: os << "webp:" << t.qf; break;
      case TransformKind::FlipLR: os << "fliplr"; break;
      case TransformKind::FlipTB: os << "fliptb"; break;
      case TransformKind::Extern: os << "extern:" << t.tag; break;
    }
  }
  return os.str();
}

std::vector<DefenseSpec> parse_defense_list(const std::string& text) {
  std::vector<DefenseSpec> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(';', pos);
    if (end == std::string::npos) end = text.size();
    const std::string item = text.substr(pos, end - pos);
    if (item.find_first_not_of(" \t") != std::string::npos)
      out.push_back(parse_defense_spec(item));
    pos = end + 1;
  }
  if (out.empty()) throw ParseError("empty defense list", 0);
  return out;
}

ImageTensor apply_defense(const DefenseSpec& spec, const ImageTensor& img,
                          const ExternRegistry* extern_commands) {
  ImageTensor cur = img;
  for (std::size_t i = 0; i < spec.transforms.size(); ++i) {
    const Transform& t = spec.transforms[i];
    switch (t.kind) {
      case TransformKind::JpegLike: cur = jpeg_like_roundtrip(cur, t.qf); break;
      case TransformKind::WebpLike: cur = webp_like_roundtrip(cur, t.qf); break;
      case TransformKind::FlipLR: cur = flip_lr(cur); break;
      case TransformKind::FlipTB: cur = flip_tb(cur); break;
      case TransformKind::Extern:
        cur = run_extern(t, cur, extern_commands, static_cast<int>(i));
        break;
    }
  }
  return cur;
}

}  // namespace prepguard
