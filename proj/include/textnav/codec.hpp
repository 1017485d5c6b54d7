#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "textnav/common.hpp"

namespace textnav {

struct FormatMode {
  enum class Kind { FixedDecimal, SigDigits };
  Kind kind = Kind::FixedDecimal;
  int digits = 6;

  static FormatMode fixed(int d);
  static FormatMode sig(int s);
};

// Per-problem number format: spring/transfer fixed 6 decimals, cr3bp and
// landing 10 significant digits (cr3bp states live near 1e-5, where fixed
// decimals would destroy the signal).
FormatMode format_mode_for(Problem p);

std::string format_number(double x, FormatMode mode);
std::string format_vec3(const Vector3d& v, FormatMode mode);  // "[a, b, c]"

// Prompt/completion templates.  Builtin copies are compiled in; the same text
// ships as editable assets under data/templates/ and can be loaded from there.
struct Templates {
  std::array<std::string, 4> prompt;  // indexed by Problem
  std::string completion;             // contains the {action} placeholder

  static const Templates& builtin();
  static Templates load_dir(const std::string& dir);
  static const char* prompt_filename(Problem p);
};

std::string render_prompt(Problem p, const StateVec& state, const StateVec& target,
                          const Templates& tpl = Templates::builtin());
std::string render_completion(const Vector3d& u, Problem p,
                              const Templates& tpl = Templates::builtin());
std::string render_completion_symbols(const std::array<int, 3>& sym,
                                      const Templates& tpl = Templates::builtin());

struct ParsedCompletion {
  Vector3d u = Vector3d::Zero();        // numeric problems
  std::array<int, 3> symbols{0, 0, 0};  // cr3bp
};
ParsedCompletion parse_completion(const std::string& text, Problem p);

struct ParsedPrompt {
  StateVec state;
  StateVec target;
};
ParsedPrompt parse_prompt_state(const std::string& text, Problem p);

struct PromptRecord {
  std::string problem;
  std::string prompt;
  std::string completion;
  long traj_id = 0;
  int step = 0;
  double t = 0.0;
};

// JSON-lines corpus io.  The writer streams; corpus sizes reach ~1e6 records.
class CorpusWriter {
 public:
  explicit CorpusWriter(const std::string& path);
  ~CorpusWriter();
  void write(const PromptRecord& rec);
  long count() const { return count_; }
  void close();

 private:
  void* out_;  // FILE*
  long count_ = 0;
};

void corpus_write(const std::vector<PromptRecord>& recs, const std::string& path);
std::vector<PromptRecord> corpus_read(const std::string& path);
void corpus_for_each(const std::string& path, const std::function<void(PromptRecord&&)>& fn);

}  // namespace textnav
