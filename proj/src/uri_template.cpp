#include "dnscoap/uri_template.hpp"

#include <cctype>
#include <stdexcept>

namespace dnscoap {

namespace {

bool unreserved(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ||
         c == '_' || c == '~';
}

// Splits "a,b,c" on commas; template variable lists never nest.
std::vector<std::string> split_names(std::string_view list) {
  std::vector<std::string> names;
  std::size_t start = 0;
  while (start <= list.size()) {
    std::size_t comma = list.find(',', start);
    if (comma == std::string_view::npos) {
      names.emplace_back(list.substr(start));
      break;
    }
    names.emplace_back(list.substr(start, comma - start));
    start = comma + 1;
  }
  for (const auto& name : names) {
    if (name.empty()) {
      throw std::invalid_argument("uri template: empty variable name");
    }
  }
  return names;
}

// Walks expressions; hands each one to `visit(op, names)` where op is
// '\0' for simple expansion or '?' for form-style query.
template <typename Literal, typename Visit>
void walk(std::string_view tmpl, Literal literal, Visit visit) {
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    if (tmpl[pos] != '{') {
      if (tmpl[pos] == '}') {
        throw std::invalid_argument("uri template: stray '}'");
      }
      literal(tmpl[pos]);
      ++pos;
      continue;
    }
    std::size_t close = tmpl.find('}', pos);
    if (close == std::string_view::npos) {
      throw std::invalid_argument("uri template: unterminated expression");
    }
    std::string_view body = tmpl.substr(pos + 1, close - pos - 1);
    if (body.empty()) {
      throw std::invalid_argument("uri template: empty expression");
    }
    char op = '\0';
    if (!unreserved(body[0])) {
      op = body[0];
      if (op != '?') {
        throw std::invalid_argument("uri template: unsupported operator");
      }
      body.remove_prefix(1);
    }
    visit(op, split_names(body));
    pos = close + 1;
  }
}

}  // namespace

std::string percent_encode(std::string_view text) {
  static const char hex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (unreserved(c)) {
      out.push_back(c);
    } else {
      unsigned char u = static_cast<unsigned char>(c);
      out.push_back('%');
      out.push_back(hex[u >> 4]);
      out.push_back(hex[u & 0xF]);
    }
  }
  return out;
}

TemplateExpansion expand_template(std::string_view tmpl,
                                  const std::map<std::string, std::string>& bindings) {
  TemplateExpansion result;
  walk(
      tmpl, [&](char c) { result.path.push_back(c); },
      [&](char op, const std::vector<std::string>& names) {
        for (const auto& name : names) {
          auto it = bindings.find(name);
          if (it == bindings.end()) {
            throw std::invalid_argument("uri template: unbound variable '" + name + "'");
          }
          if (op == '?') {
            result.query.emplace_back(name, percent_encode(it->second));
          } else {
            result.path += percent_encode(it->second);
          }
        }
      });
  return result;
}

std::vector<std::string> template_variables(std::string_view tmpl) {
  std::vector<std::string> vars;
  walk(
      tmpl, [](char) {},
      [&](char, const std::vector<std::string>& names) {
        vars.insert(vars.end(), names.begin(), names.end());
      });
  return vars;
}

}  // namespace dnscoap
