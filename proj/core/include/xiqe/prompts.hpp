#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xiqe/datamodel.hpp"

namespace xiqe {

enum class PromptVariant { Main, Baseline, NoFormat, Continue };

std::string_view to_string(PromptVariant variant) noexcept;
std::optional<PromptVariant> variant_from_string(std::string_view name) noexcept;

inline constexpr std::string_view kCaptionSlot = "<Image Caption>";

// SHA-256 of core/assets/prompts.txt as shipped.
inline constexpr std::string_view kCanonicalPromptPackSha256 =
    "f047cedca65dccd30be8635a20e91a400d6586d7260fb961999e33c5ca2fa2ba";

struct PromptTemplate {
  std::string id;
  TaskKind task = TaskKind::Fidelity;
  PromptVariant variant = PromptVariant::Main;
  std::string body;

  bool has_caption_slot() const noexcept;
};

// The twelve templates: Main, Baseline and NoFormat per task plus one
// Continue prompt per task. Immutable once loaded.
class PromptSet {
 public:
  // Parses a prompt pack document. Throws Error(InvalidPromptPack).
  static PromptSet parse(std::string_view document);
  static PromptSet load_file(const std::string& path);
  // The pack compiled into the library.
  static const PromptSet& canonical();

  const PromptTemplate& select(PromptVariant variant, TaskKind task) const;
  const std::vector<PromptTemplate>& templates() const noexcept {
    return templates_;
  }
  // SHA-256 (hex) of the raw document bytes this set was parsed from.
  const std::string& digest() const noexcept { return digest_; }

  // Finds the template a rendered prompt was produced from.
  const PromptTemplate* identify(std::string_view rendered) const;

 private:
  std::vector<PromptTemplate> templates_;
  std::string digest_;
};

// Substitutes the caption slot. Throws Error(MissingCaption) when the
// template has a slot and no caption is given, Error(UnexpectedCaption) for
// the reverse.
std::string render(const PromptTemplate& tpl,
                   const std::optional<std::string>& caption = std::nullopt);

std::string sha256_hex(std::string_view bytes);

}  // namespace xiqe
