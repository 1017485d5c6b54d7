#include "textnav/codec.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <json.hpp>

namespace textnav {

namespace {

// Templates carry a leading newline for source readability; skipped via +1.
const char* kOrbitPrompt = R"TPL(
You are an AI navigation system for a spacecraft. Your task is to guide the spacecraft from its current position to a specified destination without any time constraints (but within a single revolution) while minimizing the integral of the thrust squared.

Input:
- Current spacecraft state: 3D position {position} and velocity {velocity}
- Destination coordinates {target_position} with velocity {target_velocity}

The output should be a series of 3D thrust vectors [Tx, Ty, Tz] to be applied at specific times to navigate the spacecraft from its current position to the destination while minimizing the integral of the thrust squared.

Constraints:
- The spacecrafts motion is governed by Newtonian mechanics in a vacuum.
- The spacecraft has a limited amount of fuel, so the integral of the thrust squared must be minimized to conserve fuel.)TPL";

const char* kCr3bpPrompt = R"TPL(
You are an AI navigation system for a spacecraft holding station near a collinear libration point. Your task is to return the spacecraft to the libration point, arriving at rest, by commanding the thrust direction along each axis at every control interval.

Input:
- Current spacecraft state: 3D position {position} and velocity {velocity} relative to the libration point
- Destination coordinates {target_position} with velocity {target_velocity}

The output should be a series of direction symbols [s1, s2, s3], one per axis, where 1 commands thrust in the negative direction and 2 commands thrust in the non-negative direction, always at the fixed per-axis magnitude.

Constraints:
- The spacecrafts motion is governed by the linearized dynamics about the libration point.
- Per-axis thrust magnitude is fixed; only its direction can be chosen at each interval.)TPL";

const char* kLandingPrompt = R"TPL(
You are an AI navigation system for a planetary lander. Your task is to guide the lander from its current state to a soft touchdown at the landing site while minimizing fuel consumption.

Input:
- Current lander state: 3D position {position} and velocity {velocity}
- Current lander mass: {mass} kg
- Landing site coordinates {target_position} with velocity {target_velocity}

The output should be a series of 3D thrust acceleration vectors [Tx, Ty, Tz] to be applied at specific times to bring the lander to rest at the landing site while minimizing fuel consumption.

Constraints:
- The lander descends in a constant gravity field with bounded thrust magnitude and a limited tilt angle.
- The lander must stay inside the glideslope cone above the landing site, and its propellant is limited.)TPL";

const char* kCompletion = "Thrust vector to be applied at this time: {action}.";

void replace_once(std::string& s, const std::string& key, const std::string& val) {
  auto pos = s.find(key);
  if (pos == std::string::npos)
    throw ContractError("template is missing placeholder " + key);
  s.replace(pos, key.size(), val);
}

std::string strip_negative_zero(std::string s) {
  if (s.empty() || s[0] != '-') return s;
  for (char c : s)
    if (c >= '1' && c <= '9') return s;
  return s.substr(1);
}

bool parse_double_token(const std::string& tok, double& out) {
  const char* s = tok.c_str();
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(s, &end);
  if (end == s) return false;
  while (*end == ' ' || *end == '\t') ++end;
  if (*end != '\0') return false;
  if (!std::isfinite(v)) return false;
  out = v;
  return true;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// All bracketed numeric triples "[a, b, c]" in order of appearance; bracket
// groups that do not parse as three numbers (e.g. "[Tx, Ty, Tz]") are skipped.
std::vector<Vector3d> numeric_triples(const std::string& text, size_t max_count) {
  std::vector<Vector3d> out;
  size_t i = 0;
  while (out.size() < max_count) {
    size_t open = text.find('[', i);
    if (open == std::string::npos) break;
    size_t close = text.find(']', open + 1);
    if (close == std::string::npos) break;
    std::string body = text.substr(open + 1, close - open - 1);
    std::vector<std::string> parts;
    size_t p = 0;
    while (true) {
      size_t c = body.find(',', p);
      if (c == std::string::npos) {
        parts.push_back(body.substr(p));
        break;
      }
      parts.push_back(body.substr(p, c - p));
      p = c + 1;
    }
    if (parts.size() == 3) {
      Vector3d v;
      bool ok = true;
      for (int k = 0; k < 3; ++k)
        if (!parse_double_token(trim(parts[k]), v(k))) {
          ok = false;
          break;
        }
      if (ok) out.push_back(v);
    }
    i = close + 1;
  }
  return out;
}

}  // namespace

FormatMode FormatMode::fixed(int d) {
  if (d < 1 || d > 17) throw ContractError("FixedDecimal digits out of [1,17]");
  return FormatMode{Kind::FixedDecimal, d};
}

FormatMode FormatMode::sig(int s) {
  if (s < 1 || s > 17) throw ContractError("SigDigits digits out of [1,17]");
  return FormatMode{Kind::SigDigits, s};
}

FormatMode format_mode_for(Problem p) {
  switch (p) {
    case Problem::Spring:
    case Problem::Transfer: return FormatMode::fixed(6);
    case Problem::Cr3bp:
    case Problem::Landing: return FormatMode::sig(10);
  }
  return FormatMode::fixed(6);
}

std::string format_number(double x, FormatMode mode) {
  if (!std::isfinite(x)) throw ContractError("format_number requires a finite value");
  if (x == 0.0) x = 0.0;  // collapse -0
  char buf[64];
  if (mode.kind == FormatMode::Kind::FixedDecimal) {
    std::snprintf(buf, sizeof buf, "%.*f", mode.digits, x);
    return strip_negative_zero(buf);
  }
  // Round to the requested significant digits first, then pick plain or
  // exponent form from the rounded magnitude so boundary values stay
  // consistent with what is printed.
  std::snprintf(buf, sizeof buf, "%.*e", mode.digits - 1, x);
  std::string es(buf);
  int ex = std::atoi(es.c_str() + es.find('e') + 1);
  if (ex >= -4 && ex <= 5) {
    int dec = mode.digits - 1 - ex;
    if (dec < 0) dec = 0;
    std::snprintf(buf, sizeof buf, "%.*f", dec, x);
    return strip_negative_zero(buf);
  }
  return es;
}

std::string format_vec3(const Vector3d& v, FormatMode mode) {
  return "[" + format_number(v(0), mode) + ", " + format_number(v(1), mode) + ", " +
         format_number(v(2), mode) + "]";
}

const Templates& Templates::builtin() {
  static const Templates t = [] {
    Templates b;
    b.prompt[(int)Problem::Spring] = kOrbitPrompt + 1;
    b.prompt[(int)Problem::Transfer] = kOrbitPrompt + 1;
    b.prompt[(int)Problem::Cr3bp] = kCr3bpPrompt + 1;
    b.prompt[(int)Problem::Landing] = kLandingPrompt + 1;
    b.completion = kCompletion;
    return b;
  }();
  return t;
}

const char* Templates::prompt_filename(Problem p) {
  switch (p) {
    case Problem::Spring: return "spring_prompt.txt";
    case Problem::Transfer: return "transfer_prompt.txt";
    case Problem::Cr3bp: return "cr3bp_prompt.txt";
    case Problem::Landing: return "landing_prompt.txt";
  }
  return "";
}

Templates Templates::load_dir(const std::string& dir) {
  auto slurp = [&](const std::string& name) {
    std::ifstream in(dir + "/" + name, std::ios::binary);
    if (!in) throw ConfigError("cannot open template file " + dir + "/" + name);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    // Template files end with one newline for editor friendliness; the
    // in-memory template does not.
    if (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
  };
  Templates t;
  for (Problem p : {Problem::Spring, Problem::Transfer, Problem::Cr3bp, Problem::Landing})
    t.prompt[(int)p] = slurp(prompt_filename(p));
  t.completion = slurp("completion.txt");
  return t;
}

std::string render_prompt(Problem p, const StateVec& state, const StateVec& target,
                          const Templates& tpl) {
  FormatMode mode = format_mode_for(p);
  std::string out = tpl.prompt[(int)p];
  replace_once(out, "{position}", format_vec3(state.r, mode));
  replace_once(out, "{velocity}", format_vec3(state.v, mode));
  if (p == Problem::Landing) {
    if (!state.z) throw ContractError("landing prompt requires the mass component");
    replace_once(out, "{mass}", format_number(std::exp(*state.z), mode));
  }
  replace_once(out, "{target_position}", format_vec3(target.r, mode));
  replace_once(out, "{target_velocity}", format_vec3(target.v, mode));
  return out;
}

std::string render_completion(const Vector3d& u, Problem p, const Templates& tpl) {
  std::string out = tpl.completion;
  replace_once(out, "{action}", format_vec3(u, format_mode_for(p)));
  return out;
}

std::string render_completion_symbols(const std::array<int, 3>& sym, const Templates& tpl) {
  for (int s : sym)
    if (s != 1 && s != 2) throw ContractError("direction symbols must be 1 or 2");
  std::string out = tpl.completion;
  replace_once(out, "{action}", "[" + std::to_string(sym[0]) + ", " + std::to_string(sym[1]) +
                                    ", " + std::to_string(sym[2]) + "]");
  return out;
}

ParsedCompletion parse_completion(const std::string& text, Problem p) {
  auto triples = numeric_triples(text, 1);
  if (triples.empty())
    throw ParseError("completion has no bracketed numeric triple", text);
  ParsedCompletion out;
  if (p == Problem::Cr3bp) {
    for (int k = 0; k < 3; ++k) {
      double v = triples[0](k);
      if (v != 1.0 && v != 2.0)
        throw ParseError("cr3bp completion symbol is not 1 or 2", text);
      out.symbols[k] = (int)v;
    }
  } else {
    out.u = triples[0];
  }
  return out;
}

ParsedPrompt parse_prompt_state(const std::string& text, Problem p) {
  auto triples = numeric_triples(text, 4);
  if (triples.size() < 4)
    throw ParseError("prompt does not contain state and target triples", text);
  ParsedPrompt out;
  out.state.r = triples[0];
  out.state.v = triples[1];
  out.target.r = triples[2];
  out.target.v = triples[3];
  if (p == Problem::Landing) {
    size_t pos = text.find("mass: ");
    if (pos == std::string::npos)
      throw ParseError("landing prompt has no mass field", text);
    double m = std::strtod(text.c_str() + pos + 6, nullptr);
    if (!(m > 0.0)) throw ParseError("landing prompt mass is not positive", text);
    out.state.z = std::log(m);
  }
  return out;
}

namespace {

nlohmann::json record_to_json(const PromptRecord& rec) {
  nlohmann::json j;
  j["problem"] = rec.problem;
  j["prompt"] = rec.prompt;
  j["completion"] = rec.completion;
  j["traj_id"] = rec.traj_id;
  j["step"] = rec.step;
  j["t"] = rec.t;
  return j;
}

PromptRecord record_from_json(const nlohmann::json& j) {
  PromptRecord rec;
  rec.problem = j.at("problem").get<std::string>();
  rec.prompt = j.at("prompt").get<std::string>();
  rec.completion = j.at("completion").get<std::string>();
  rec.traj_id = j.at("traj_id").get<long>();
  rec.step = j.at("step").get<int>();
  rec.t = j.at("t").get<double>();
  if (rec.prompt.empty() || rec.completion.empty())
    throw ParseError("corpus record with empty prompt or completion");
  return rec;
}

}  // namespace

CorpusWriter::CorpusWriter(const std::string& path) {
  out_ = std::fopen(path.c_str(), "wb");
  if (!out_) throw ConfigError("cannot open corpus file for writing: " + path);
}

CorpusWriter::~CorpusWriter() { close(); }

void CorpusWriter::close() {
  if (out_) {
    std::fclose((FILE*)out_);
    out_ = nullptr;
  }
}

void CorpusWriter::write(const PromptRecord& rec) {
  std::string line = record_to_json(rec).dump();
  line.push_back('\n');
  if (std::fwrite(line.data(), 1, line.size(), (FILE*)out_) != line.size())
    throw NumericalError("short write on corpus file");
  ++count_;
}

void corpus_write(const std::vector<PromptRecord>& recs, const std::string& path) {
  CorpusWriter w(path);
  for (const auto& r : recs) w.write(r);
}

void corpus_for_each(const std::string& path,
                     const std::function<void(PromptRecord&&)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open corpus file: " + path);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      fn(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("corpus parse error at line " + std::to_string(lineno) + ": " +
                       e.what());
    }
  }
}

std::vector<PromptRecord> corpus_read(const std::string& path) {
  std::vector<PromptRecord> out;
  corpus_for_each(path, [&](PromptRecord&& r) { out.push_back(std::move(r)); });
  return out;
}

}  // namespace textnav
