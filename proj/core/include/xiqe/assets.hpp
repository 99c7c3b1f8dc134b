#pragma once

#include <string_view>

namespace xiqe::assets {

// Byte-exact copies of the files under core/assets/, embedded at build time.
std::string_view prompt_pack();
std::string_view mock_script();
std::string_view parser_corpus();

}  // namespace xiqe::assets
