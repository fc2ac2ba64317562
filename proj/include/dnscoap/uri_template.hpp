#pragma once

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dnscoap {

// URI template expansion, limited to simple string expansion {var} and
// form-style query expansion {?var,...}. Other operators are rejected.
struct TemplateExpansion {
  std::string path;
  // name/value pairs from {?...} expressions, percent-encoded
  std::vector<std::pair<std::string, std::string>> query;
};

TemplateExpansion expand_template(std::string_view tmpl,
                                  const std::map<std::string, std::string>& bindings);

// Variable names in order of appearance.
std::vector<std::string> template_variables(std::string_view tmpl);

// Percent-encodes everything outside unreserved (ALPHA / DIGIT / - . _ ~).
std::string percent_encode(std::string_view text);

}  // namespace dnscoap
