#include "longbio/util.hpp"

#include <fstream>
#include <sstream>

namespace longbio {

std::string substitute(std::string_view tmpl,
                       const std::vector<std::pair<std::string, std::string>>& vars,
                       bool check_unresolved) {
  std::string out(tmpl);
  for (const auto& [key, value] : vars) {
    const std::string placeholder = "{" + key + "}";
    size_t pos = 0;
    while ((pos = out.find(placeholder, pos)) != std::string::npos) {
      out.replace(pos, placeholder.size(), value);
      pos += value.size();
    }
  }
  if (check_unresolved) {
    size_t open = out.find('{');
    while (open != std::string::npos) {
      size_t close = out.find('}', open);
      if (close != std::string::npos && close - open <= 32) {
        std::string_view inner(out.data() + open + 1, close - open - 1);
        bool identifier = !inner.empty();
        for (char c : inner) {
          if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) {
            identifier = false;
            break;
          }
        }
        if (identifier)
          throw Error("unresolved placeholder {" + std::string(inner) + "} in template");
      }
      open = out.find('{', open + 1);
    }
  }
  return out;
}

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

}  // namespace longbio
