#pragma once

#include <map>
#include <string>
#include <vector>

#include "prepguard/tensor.hpp"

namespace prepguard {

enum class TransformKind { JpegLike, WebpLike, FlipLR, FlipTB, Extern };

struct Transform {
  TransformKind kind = TransformKind::FlipLR;
  int qf = 0;       // codec transforms
  std::string tag;  // extern transforms
};

// Ordered preprocessing chain applied before classification. An empty chain
// is the "none" defense.
struct DefenseSpec {
  std::vector<Transform> transforms;
  std::string name;  // canonical spec text, echoed verbatim in reports
};

// tag -> command template with {in} and {out} placeholders; lets a defense
// round-trip pixels through a real external codec without linking it.
using ExternRegistry = std::map<std::string, std::string>;

// Grammar: transform ("," transform)*
//   transform := "jpeg:"INT | "webp:"INT | "fliplr" | "fliptb" | "extern:"TAG | "none"
// Whitespace is ignored; errors carry the byte offset in the original text.
DefenseSpec parse_defense_spec(const std::string& text);
std::string format_defense_spec(const DefenseSpec& spec);

// Semicolon-separated list of defense specs.
std::vector<DefenseSpec> parse_defense_list(const std::string& text);

ImageTensor apply_defense(const DefenseSpec& spec, const ImageTensor& img,
                          const ExternRegistry* extern_commands = nullptr);

}  // namespace prepguard
