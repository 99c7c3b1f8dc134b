#include "xiqe/prompts.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "xiqe/assets.hpp"
#include "xiqe/error.hpp"

namespace xiqe {

std::string_view to_string(PromptVariant variant) noexcept {
  switch (variant) {
    case PromptVariant::Main: return "main";
    case PromptVariant::Baseline: return "baseline";
    case PromptVariant::NoFormat: return "noformat";
    case PromptVariant::Continue: return "continue";
  }
  return "unknown";
}

std::optional<PromptVariant> variant_from_string(std::string_view name) noexcept {
  for (auto v : {PromptVariant::Main, PromptVariant::Baseline,
                 PromptVariant::NoFormat, PromptVariant::Continue}) {
    if (to_string(v) == name) return v;
  }
  return std::nullopt;
}

bool PromptTemplate::has_caption_slot() const noexcept {
  return body.find(kCaptionSlot) != std::string::npos;
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(),
                 nullptr) != 1) {
    throw Error(Errc::IoError, "SHA-256 digest failed");
  }
  std::string hex;
  hex.reserve(len * 2);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

namespace {

constexpr std::string_view kHeader = "### template ";
constexpr std::string_view kEnd = "### end";

[[noreturn]] void pack_error(std::size_t line, const std::string& msg) {
  throw Error(Errc::InvalidPromptPack,
              "prompt pack line " + std::to_string(line) + ": " + msg);
}

std::map<std::string, std::string> parse_header(std::string_view rest,
                                                std::size_t line_no) {
  std::map<std::string, std::string> fields;
  std::istringstream in{std::string(rest)};
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == token.size()) {
      pack_error(line_no, "malformed header field '" + token + "'");
    }
    fields[token.substr(0, eq)] = token.substr(eq + 1);
  }
  for (const char* key : {"id", "task", "variant"}) {
    if (!fields.count(key)) {
      pack_error(line_no, std::string("header missing '") + key + "'");
    }
  }
  return fields;
}

std::size_t count_slots(std::string_view body) {
  std::size_t n = 0;
  for (auto pos = body.find(kCaptionSlot); pos != std::string_view::npos;
       pos = body.find(kCaptionSlot, pos + kCaptionSlot.size())) {
    ++n;
  }
  return n;
}

void check_complete(const std::vector<PromptTemplate>& templates) {
  std::map<std::pair<TaskKind, PromptVariant>, const PromptTemplate*> seen;
  std::map<std::string, int> ids;
  for (const auto& tpl : templates) {
    if (++ids[tpl.id] > 1) {
      throw Error(Errc::InvalidPromptPack, "duplicate template id " + tpl.id);
    }
    if (!seen.emplace(std::pair{tpl.task, tpl.variant}, &tpl).second) {
      throw Error(Errc::InvalidPromptPack,
                  "duplicate template for " + std::string(to_string(tpl.task)) +
                      "/" + std::string(to_string(tpl.variant)));
    }
    const bool wants_slot = tpl.task == TaskKind::Alignment &&
                            tpl.variant != PromptVariant::Continue;
    const auto slots = count_slots(tpl.body);
    if (wants_slot && slots != 1) {
      throw Error(Errc::InvalidPromptPack,
                  tpl.id + " must contain exactly one caption slot");
    }
    if (!wants_slot && slots != 0) {
      throw Error(Errc::InvalidPromptPack,
                  tpl.id + " must not contain a caption slot");
    }
  }
  if (seen.size() != 12) {
    throw Error(Errc::InvalidPromptPack,
                "prompt pack must define 12 templates, found " +
                    std::to_string(seen.size()));
  }
}

}  // namespace

PromptSet PromptSet::parse(std::string_view document) {
  PromptSet set;
  set.digest_ = sha256_hex(document);

  std::optional<PromptTemplate> open;
  std::string body;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= document.size()) {
    auto nl = document.find('\n', pos);
    if (nl == std::string_view::npos) nl = document.size();
    std::string_view line = document.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    pos = nl + 1;

    if (open) {
      if (line == kEnd) {
        if (!body.empty() && body.back() == '\n') body.pop_back();
        open->body = std::move(body);
        body.clear();
        set.templates_.push_back(std::move(*open));
        open.reset();
      } else {
        body.append(line);
        body.push_back('\n');
      }
      continue;
    }
    if (line.empty()) continue;
    if (line.substr(0, kHeader.size()) != kHeader) {
      pack_error(line_no, "text outside a template block");
    }
    auto fields = parse_header(line.substr(kHeader.size()), line_no);
    auto task = task_from_string(fields["task"]);
    auto variant = variant_from_string(fields["variant"]);
    if (!task) pack_error(line_no, "unknown task '" + fields["task"] + "'");
    if (!variant) {
      pack_error(line_no, "unknown variant '" + fields["variant"] + "'");
    }
    open = PromptTemplate{fields["id"], *task, *variant, {}};
  }
  if (open) pack_error(line_no, "unterminated template " + open->id);

  check_complete(set.templates_);
  return set;
}

PromptSet PromptSet::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open prompt pack " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const PromptSet& PromptSet::canonical() {
  static const PromptSet set = parse(assets::prompt_pack());
  return set;
}

const PromptTemplate& PromptSet::select(PromptVariant variant,
                                        TaskKind task) const {
  for (const auto& tpl : templates_) {
    if (tpl.variant == variant && tpl.task == task) return tpl;
  }
  throw Error(Errc::UnknownVariant,
              "no " + std::string(to_string(variant)) + " template for " +
                  std::string(to_string(task)));
}

const PromptTemplate* PromptSet::identify(std::string_view rendered) const {
  for (const auto& tpl : templates_) {
    const std::string_view body = tpl.body;
    const auto slot = body.find(kCaptionSlot);
    if (slot == std::string_view::npos) {
      if (rendered == body) return &tpl;
      continue;
    }
    const auto prefix = body.substr(0, slot);
    const auto suffix = body.substr(slot + kCaptionSlot.size());
    if (rendered.size() >= prefix.size() + suffix.size() &&
        rendered.substr(0, prefix.size()) == prefix &&
        rendered.substr(rendered.size() - suffix.size()) == suffix) {
      return &tpl;
    }
  }
  return nullptr;
}

std::string render(const PromptTemplate& tpl,
                   const std::optional<std::string>& caption) {
  const auto slot = tpl.body.find(kCaptionSlot);
  if (slot == std::string::npos) {
    if (caption) {
      throw Error(Errc::UnexpectedCaption,
                  "template " + tpl.id + " takes no caption");
    }
    return tpl.body;
  }
  if (!caption) {
    throw Error(Errc::MissingCaption, "template " + tpl.id + " needs a caption");
  }
  if (caption->find(kCaptionSlot) != std::string::npos) {
    throw Error(Errc::InvalidConfig, "caption contains the slot marker");
  }
  std::string out = tpl.body;
  out.replace(slot, kCaptionSlot.size(), *caption);
  return out;
}

}  // namespace xiqe
