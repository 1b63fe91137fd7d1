#include "longbio/tokens.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include <cctype>
#include <cstdlib>
#include <stdexcept>

#include "longbio/http.hpp"
#include "longbio/util.hpp"

namespace longbio {

namespace {

int64_t parse_count(const std::string& out, const std::string& origin) {
  // accept either a bare integer or {"tokens": n}
  size_t i = 0;
  while (i < out.size() && std::isspace(static_cast<unsigned char>(out[i]))) ++i;
  if (i < out.size() && out[i] == '{') {
    try {
      auto doc = nlohmann::json::parse(out);
      return doc.at("tokens").get<int64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(origin + ": unparseable counter reply: " + e.what());
    }
  }
  try {
    size_t pos = 0;
    const long long v = std::stoll(out.substr(i), &pos);
    if (v < 0) throw Error(origin + ": negative token count");
    return v;
  } catch (const std::logic_error&) {
    throw Error(origin + ": counter reply is not an integer: \"" + std::string(trim(out)) + "\"");
  }
}

// run `sh -c cmd` feeding `input` on stdin, capture stdout
std::string run_capture(const std::string& cmd, const std::string& input) {
  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) throw Error("pipe() failed");
  const pid_t pid = fork();
  if (pid < 0) throw Error("fork() failed");
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  size_t written = 0;
  while (written < input.size()) {
    const ssize_t n = write(in_pipe[1], input.data() + written, input.size() - written);
    if (n <= 0) break;
    written += static_cast<size_t>(n);
  }
  close(in_pipe[1]);
  std::string out;
  char buf[4096];
  for (;;) {
    const ssize_t n = read(out_pipe[0], buf, sizeof(buf));
    if (n <= 0) break;
    out.append(buf, static_cast<size_t>(n));
  }
  close(out_pipe[0]);
  int status = 0;
  waitpid(pid, &status, 0);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw Error("counter command failed (status " + std::to_string(status) + "): " + cmd);
  return out;
}

}  // namespace

TokenCounter TokenCounter::make(const std::string& spec) {
  TokenCounter c;
  c.spec_ = spec;
  if (spec == "chars") {
    c.kind_ = Kind::chars;
  } else if (spec == "words") {
    c.kind_ = Kind::words;
  } else if (spec.rfind("cmd:", 0) == 0) {
    c.kind_ = Kind::cmd;
    c.target_ = spec.substr(4);
    if (c.target_.empty()) throw Error("empty counter command in \"" + spec + "\"");
  } else if (spec.rfind("svc:", 0) == 0) {
    c.kind_ = Kind::svc;
    c.target_ = spec.substr(4);
    if (c.target_.empty()) throw Error("empty counter URL in \"" + spec + "\"");
  } else {
    throw Error("unknown token counter \"" + spec +
                "\" (expected chars, words, cmd:..., svc:...)");
  }
  return c;
}

int64_t TokenCounter::words_in(const std::string& text) {
  int64_t words = 0;
  bool in_word = false;
  for (char ch : text) {
    const bool space = is_space(ch);
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return words;
}

int64_t TokenCounter::tokens_from_parts(int64_t bytes, int64_t words) const {
  switch (kind_) {
    case Kind::chars: return chars_tokens(bytes);
    case Kind::words: return words_tokens(words);
    default: throw Error("tokens_from_parts on a non-incremental counter");
  }
}

int64_t TokenCounter::count(const std::string& text) const {
  switch (kind_) {
    case Kind::chars:
      return chars_tokens(static_cast<int64_t>(text.size()));
    case Kind::words:
      return words_tokens(words_in(text));
    case Kind::cmd:
      return parse_count(run_capture(target_, text), spec_);
    case Kind::svc: {
      auto reply = http_post(target_, text, "text/plain");
      if (reply.status < 200 || reply.status >= 300)
        throw Error("counter service " + target_ + " returned status " +
                    std::to_string(reply.status));
      return parse_count(reply.body, spec_);
    }
  }
  return 0;
}

}  // namespace longbio
