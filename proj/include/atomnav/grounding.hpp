#pragma once

// Grounding: fuzzy location matching over parsed signs, selection of a
// frontier or structure for an instruction (deterministic geometric rule or
// VLM), subgoal projection, and the multiple-choice benchmark harness.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "atomnav/errors.hpp"
#include "atomnav/geometry.hpp"
#include "atomnav/map_builder.hpp"
#include "atomnav/ports.hpp"
#include "atomnav/prompts.hpp"
#include "atomnav/render.hpp"
#include "atomnav/scene.hpp"
#include "atomnav/sign_understanding.hpp"

namespace atomnav {

// ---------------------------------------------------------------------------
// Fuzzy matching
// ---------------------------------------------------------------------------

inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  const std::size_t n = a.size(), m = b.size();
  if (n == 0) return m;
  if (m == 0) return n;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

/// 1 - lev/max(|a|,|b|) over normalized phrases; 1.0 for two empties.
inline double match_score(std::string_view a, std::string_view b) {
  const std::string na = normalize_phrase(a);
  const std::string nb = normalize_phrase(b);
  const std::size_t longest = std::max(na.size(), nb.size());
  if (longest == 0) return 1.0;
  return 1.0 - double(levenshtein(na, nb)) / double(longest);
}

struct LocationMatch {
  int sign_id = 0;
  std::string location;  // the matched parsed phrase
  double score = 0.0;
  Instruction instruction = Instruction::kLocational;
};

/// Best fuzzy match of the query against every cue location and locational
/// phrase of every parsed sign. Score ties break toward the sign nearest the
/// last frame pose. Returns nullopt below the accept threshold.
inline std::optional<LocationMatch> match_location(const std::string& query,
                                                   const AtomMap& map,
                                                   double threshold = 0.6) {
  bool any_parsed = false;
  std::optional<LocationMatch> best;
  double best_sign_dist = 0.0;
  Vec2 last_xy(0.0, 0.0);
  if (!map.frame_log.empty())
    last_xy = Vec2(map.frame_log.back().second.t.x(),
                   map.frame_log.back().second.t.y());

  for (const auto& sign : map.signs) {
    if (sign.merged_cues.empty()) continue;
    any_parsed = true;
    const double sign_dist =
        (Vec2(sign.centroid.x(), sign.centroid.y()) - last_xy).norm();
    auto consider = [&](const std::string& phrase, Instruction instr) {
      const double s = match_score(query, phrase);
      const bool better =
          !best || s > best->score ||
          (s == best->score && sign_dist < best_sign_dist &&
           sign.id != best->sign_id);
      if (better) {
        best = LocationMatch{sign.id, phrase, s, instr};
        best_sign_dist = sign_dist;
      }
    };
    for (const auto& cue : sign.merged_cues.cues)
      consider(cue.location, cue.instruction);
    for (const auto& loc : sign.merged_cues.locational)
      consider(loc, Instruction::kLocational);
  }
  if (!any_parsed) throw NoParsedSigns("map has no sign with parsed cues");
  if (!best || best->score < threshold) return std::nullopt;
  return best;
}

// ---------------------------------------------------------------------------
// Element selection
// ---------------------------------------------------------------------------

struct SelectedElement {
  enum Kind { kFrontier, kStructure, kLocationalOnly } kind = kFrontier;
  std::string id;  // frontier letter or structure label
  Vec2 point{0.0, 0.0};  // sign-frame coordinates

  bool operator==(const SelectedElement& o) const {
    return kind == o.kind && id == o.id;
  }
};

struct GroundCandidate {
  SelectedElement::Kind kind = SelectedElement::kFrontier;
  std::string id;
  std::string class_label;  // structures only
  Vec2 point{0.0, 0.0};
};

inline std::string label_class(const std::string& label) {
  const auto pos = label.rfind(" #");
  return pos == std::string::npos ? label : label.substr(0, pos);
}

inline std::vector<GroundCandidate> render_candidates(const AtomRender& r) {
  std::vector<GroundCandidate> out;
  for (const auto& f : r.frontiers)
    out.push_back({SelectedElement::kFrontier, f.letter, "", f.point});
  for (const auto& b : r.boxes)
    out.push_back({SelectedElement::kStructure, b.label, label_class(b.label),
                   b.rect.center});
  return out;
}

/// The grounding rule shared by the geometric grounder and the simulator
/// oracle. Structure tokens select the nearest structure of the matching
/// class; directional tokens take the cosine argmax over all candidate
/// directions from the origin; compound tokens filter to the halfplane of
/// the first leg and score against the normalized blend, falling back to
/// the first leg alone when the filter empties.
inline SelectedElement apply_grounding_rule(
    const std::vector<GroundCandidate>& candidates, Instruction instruction) {
  if (is_locational(instruction))
    return SelectedElement{SelectedElement::kLocationalOnly, "", Vec2(0, 0)};
  if (candidates.empty()) throw NothingToGround("no frontiers or structures");

  if (is_structure(instruction)) {
    const StructureSense sense = structure_sense(instruction);
    const GroundCandidate* best = nullptr;
    for (const auto& c : candidates) {
      if (c.kind != SelectedElement::kStructure || c.class_label != sense.class_label)
        continue;
      if (!best || c.point.norm() < best->point.norm()) best = &c;
    }
    if (!best)
      throw NoSuchStructure("no structure of class " + sense.class_label);
    return SelectedElement{SelectedElement::kStructure, best->id, best->point};
  }

  auto argmax_cosine = [&](const Vec2& dir,
                           const std::vector<const GroundCandidate*>& pool)
      -> const GroundCandidate* {
    const GroundCandidate* best = nullptr;
    double best_cos = -2.0;
    double best_norm = 0.0;
    for (const auto* c : pool) {
      const double norm = c->point.norm();
      if (norm < 1e-9) continue;
      const double cosine = c->point.dot(dir) / norm;
      if (!best || cosine > best_cos + 1e-12 ||
          (std::abs(cosine - best_cos) <= 1e-12 && norm < best_norm)) {
        best = c;
        best_cos = cosine;
        best_norm = norm;
      }
    }
    return best;
  };

  std::vector<const GroundCandidate*> all;
  all.reserve(candidates.size());
  for (const auto& c : candidates) all.push_back(&c);

  const GroundCandidate* chosen = nullptr;
  if (is_compound(instruction)) {
    const auto [first, second] = compound_parts(instruction);
    const Vec2 dir_first = direction_vector(first);
    const Vec2 blend =
        (dir_first + direction_vector(second)).normalized();
    std::vector<const GroundCandidate*> halfplane;
    for (const auto* c : all)
      if (c->point.dot(dir_first) > 0.0) halfplane.push_back(c);
    if (!halfplane.empty())
      chosen = argmax_cosine(blend, halfplane);
    if (!chosen) chosen = argmax_cosine(dir_first, all);
  } else {
    chosen = argmax_cosine(direction_vector(instruction), all);
  }
  if (!chosen) throw NothingToGround("no candidate with usable direction");
  return SelectedElement{chosen->kind == SelectedElement::kStructure
                             ? SelectedElement::kStructure
                             : SelectedElement::kFrontier,
                         chosen->id, chosen->point};
}

inline SelectedElement ground_geometric(const AtomRender& render,
                                        const NavCue& cue) {
  return apply_grounding_rule(render_candidates(render), cue.instruction);
}

// ---------------------------------------------------------------------------
// VLM grounding
// ---------------------------------------------------------------------------

/// Serialize a single cue in the dict form the parse prompt requests.
inline std::string cue_parsing_text(const NavCue& cue) {
  return std::string("{'") + to_token(cue.instruction) + "': ['" +
         cue.location + "']}";
}

inline VlmRequest build_ground_request(const AtomRender& render,
                                       const NavCue& cue) {
  VlmRequest req;
  req.add_image(render.image_png);
  std::string prompt = replace_all(kGroundPromptTemplate, "{location}",
                                   cue.location);
  prompt = replace_all(prompt, "{parsing}", cue_parsing_text(cue));
  req.add_text(prompt);
  return req;
}

/// Tolerant reply resolution: bracketed token if present, else the whole
/// trimmed text; matched case-insensitively against frontier letters, then
/// full structure labels, then structure class names.
inline SelectedElement resolve_ground_reply(const AtomRender& render,
                                            const std::string& reply) {
  std::string token = reply;
  const auto open = reply.rfind('[');
  if (open != std::string::npos) {
    const auto close = reply.find(']', open);
    if (close != std::string::npos) token = reply.substr(open + 1, close - open - 1);
  }
  const std::string norm = normalize_phrase(token);
  if (norm.empty()) throw UngroundableReply(reply);
  for (const auto& f : render.frontiers)
    if (normalize_phrase(f.letter) == norm)
      return SelectedElement{SelectedElement::kFrontier, f.letter, f.point};
  for (const auto& b : render.boxes)
    if (normalize_phrase(b.label) == norm)
      return SelectedElement{SelectedElement::kStructure, b.label,
                             b.rect.center};
  for (const auto& b : render.boxes)
    if (normalize_phrase(label_class(b.label)) == norm)
      return SelectedElement{SelectedElement::kStructure, b.label,
                             b.rect.center};
  throw UngroundableReply(reply);
}

inline SelectedElement ground_vlm(const AtomRender& render, const NavCue& cue,
                                  VlmClient& vlm) {
  if (is_locational(cue.instruction))
    return SelectedElement{SelectedElement::kLocationalOnly, "", Vec2(0, 0)};
  const VlmResponse resp = vlm.chat(build_ground_request(render, cue));
  return resolve_ground_reply(render, resp.text);
}

// ---------------------------------------------------------------------------
// Subgoal
// ---------------------------------------------------------------------------

struct Subgoal {
  Vec3 point{0.0, 0.0, 0.0};      // world, z = 0
  double x = 0.0, y = 0.0;        // SE(2)
  double heading = 0.0;           // from sign origin toward the point
};

inline Subgoal to_subgoal(const SelectedElement& selected,
                          const AtomRender& render) {
  if (selected.kind == SelectedElement::kLocationalOnly)
    throw NotDirectional("locational-only match has no subgoal");
  const Vec2 world = render.frame.to_world(selected.point);
  Subgoal g;
  g.point = Vec3(world.x(), world.y(), 0.0);
  g.x = world.x();
  g.y = world.y();
  const Vec2 d = world - render.frame.origin;
  g.heading = std::atan2(d.y(), d.x());
  return g;
}

// ---------------------------------------------------------------------------
// Multiple-choice benchmark answering
// ---------------------------------------------------------------------------

struct Choice {
  std::string id;
  double u = 0.0, v = 0.0;
};

struct GroundingQuery {
  std::string goal_text;
  bool multiple_choice = false;
  double frame_t = 0.0;
  std::vector<Choice> choices;
  std::optional<std::string> truth;
  std::optional<NavCue> truth_cue;
};

inline GroundingQuery query_from_json(const json& j) {
  GroundingQuery q;
  q.goal_text = j.at("query").get<std::string>();
  if (j.contains("choices")) {
    q.multiple_choice = true;
    q.frame_t = j.at("frame_t").get<double>();
    for (const auto& c : j["choices"])
      q.choices.push_back({c.at("id").get<std::string>(),
                           c.at("px").at(0).get<double>(),
                           c.at("px").at(1).get<double>()});
  }
  if (j.contains("truth")) q.truth = j["truth"].get<std::string>();
  if (j.contains("truth_cue")) {
    const auto tok = instruction_from_token(
        j["truth_cue"].at("instruction").get<std::string>());
    if (!tok) throw Error("unknown truth_cue instruction");
    q.truth_cue = NavCue{j["truth_cue"].at("location").get<std::string>(), *tok};
  }
  return q;
}

/// Unproject each annotated choice pixel with the frame at the query's
/// timestamp; the answer is the choice nearest the subgoal, ties broken
/// lexicographically.
inline std::string answer_multiple_choice(const GroundingQuery& query,
                                          const Vec3& subgoal,
                                          const std::vector<Frame>& frames) {
  const Frame* frame = nullptr;
  for (const auto& f : frames)
    if (std::abs(f.timestamp - query.frame_t) <= 1e-6) frame = &f;
  if (!frame)
    throw Error("no frame at t=" + std::to_string(query.frame_t));
  std::vector<Choice> choices = query.choices;
  std::sort(choices.begin(), choices.end(),
            [](const Choice& a, const Choice& b) { return a.id < b.id; });
  std::string best_id;
  double best_d = 0.0;
  for (const auto& c : choices) {
    const int u = int(std::lround(c.u)), v = int(std::lround(c.v));
    if (u < 0 || v < 0 || u >= frame->depth.width || v >= frame->depth.height ||
        !frame->depth.valid_at(u, v))
      throw ChoiceDepthMissing(c.id);
    const Vec3 p = unproject(c.u, c.v, frame->depth.meters_at(u, v),
                             frame->intrinsics, frame->pose);
    const double d = (p - subgoal).norm();
    if (best_id.empty() || d < best_d) {
      best_id = c.id;
      best_d = d;
    }
  }
  return best_id;
}

// ---------------------------------------------------------------------------
// End-to-end query helper
// ---------------------------------------------------------------------------

enum class Grounder { kGeometric, kVlm };

struct GroundingResult {
  int sign_id = 0;
  std::string matched_location;
  double match_score = 0.0;
  Instruction instruction = Instruction::kLocational;
  SelectedElement selected;
  std::optional<Subgoal> subgoal;
  std::optional<std::string> answer;
};

inline json grounding_result_to_json(const GroundingResult& r) {
  json j;
  j["sign_id"] = r.sign_id;
  j["matched_location"] = r.matched_location;
  j["match_score"] = r.match_score;
  j["instruction"] = to_token(r.instruction);
  const char* kind = r.selected.kind == SelectedElement::kFrontier
                         ? "frontier"
                         : r.selected.kind == SelectedElement::kStructure
                               ? "structure"
                               : "locational_only";
  j["selected"] = {{"kind", kind}, {"id", r.selected.id}};
  if (r.subgoal) {
    j["subgoal_3d"] = {r.subgoal->point.x(), r.subgoal->point.y(),
                       r.subgoal->point.z()};
    j["subgoal_se2"] = {{"x", r.subgoal->x},
                        {"y", r.subgoal->y},
                        {"heading", r.subgoal->heading}};
  }
  if (r.answer) j["answer"] = *r.answer;
  return j;
}

/// Match, render around the matched sign, ground, and project the subgoal.
/// nullopt = no location matched above the threshold.
inline std::optional<GroundingResult> ground_query(
    const AtomMap& map, const std::string& query_text, const RenderConfig& rcfg,
    Grounder grounder, VlmClient* vlm, double threshold = 0.6) {
  const auto match = match_location(query_text, map, threshold);
  if (!match) return std::nullopt;
  GroundingResult result;
  result.sign_id = match->sign_id;
  result.matched_location = match->location;
  result.match_score = match->score;
  result.instruction = match->instruction;
  if (is_locational(match->instruction)) {
    result.selected =
        SelectedElement{SelectedElement::kLocationalOnly, "", Vec2(0, 0)};
    return result;
  }
  const AtomRender r = render(map, match->sign_id, rcfg);
  const NavCue cue{match->location, match->instruction};
  if (grounder == Grounder::kVlm) {
    if (!vlm) throw Error("vlm grounder requires a VLM client");
    result.selected = ground_vlm(r, cue, *vlm);
  } else {
    result.selected = ground_geometric(r, cue);
  }
  result.subgoal = to_subgoal(result.selected, r);
  return result;
}

// ---------------------------------------------------------------------------
// Benchmark runner
// ---------------------------------------------------------------------------

struct BenchQueryResult {
  std::string query;
  std::string answer;
  std::string truth;
  bool correct = false;
  bool parse_evaluated = false;
  bool parse_correct = false;
  std::string reason;
};

struct BenchSequenceResult {
  std::string name;
  int correct = 0, total = 0;
  int parse_correct = 0, parse_total = 0;
  std::vector<BenchQueryResult> queries;
};

struct BenchReport {
  std::vector<BenchSequenceResult> sequences;
  int correct = 0, total = 0;
  int parse_correct = 0, parse_total = 0;

  json to_json() const {
    json seqs = json::array();
    for (const auto& s : sequences) {
      json queries = json::array();
      for (const auto& q : s.queries) {
        json jq = {{"query", q.query}, {"answer", q.answer},
                   {"truth", q.truth}, {"correct", q.correct}};
        if (q.parse_evaluated) jq["parse_correct"] = q.parse_correct;
        if (!q.reason.empty()) jq["reason"] = q.reason;
        queries.push_back(jq);
      }
      seqs.push_back({{"name", s.name},
                      {"correct", s.correct},
                      {"total", s.total},
                      {"parse_correct", s.parse_correct},
                      {"parse_total", s.parse_total},
                      {"queries", queries}});
    }
    return json{{"sequences", seqs},
                {"aggregate",
                 {{"correct", correct},
                  {"total", total},
                  {"accuracy", total ? double(correct) / total : 0.0},
                  {"parse_correct", parse_correct},
                  {"parse_total", parse_total}}}};
  }

  std::string table_text() const {
    std::string head = "            ";
    std::string row = "Ours        ";
    for (std::size_t i = 0; i < sequences.size(); ++i) {
      const std::string tag = "S" + std::to_string(i + 1);
      const std::string cell = std::to_string(sequences[i].correct) + "/" +
                               std::to_string(sequences[i].total);
      const std::size_t w = std::max(tag.size(), cell.size()) + 2;
      head += tag + std::string(w - tag.size(), ' ');
      row += cell + std::string(w - cell.size(), ' ');
    }
    head += "All";
    row += std::to_string(correct) + "/" + std::to_string(total);
    std::string legend;
    for (std::size_t i = 0; i < sequences.size(); ++i)
      legend += "S" + std::to_string(i + 1) + " = " + sequences[i].name + "\n";
    return head + "\n" + row + "\n\n" + legend;
  }
};

using VlmFactory =
    std::function<std::unique_ptr<VlmClient>(const std::filesystem::path&)>;

inline BenchSequenceResult run_benchmark_sequence(
    const std::filesystem::path& seq_dir, Grounder grounder,
    const VlmFactory& make_vlm, const BuilderConfig& bcfg,
    const RenderConfig& rcfg, const SymbolDictionary& dict,
    double match_threshold = 0.6) {
  BenchSequenceResult result;
  result.name = seq_dir.filename().string();

  const std::vector<Frame> frames = read_sequence(seq_dir);
  const auto vlm = make_vlm(seq_dir);
  const AtomMap map = build_map(frames, bcfg, dict, *vlm);

  const json jq = json::parse(read_file(seq_dir / "queries.json"));
  for (const auto& item : jq.at("queries")) {
    const GroundingQuery query = query_from_json(item);
    BenchQueryResult qr;
    qr.query = query.goal_text;
    qr.truth = query.truth.value_or("");
    result.total += 1;
    try {
      const auto match = match_location(query.goal_text, map, match_threshold);
      if (query.truth_cue) {
        qr.parse_evaluated = true;
        result.parse_total += 1;
        if (match && match->instruction == query.truth_cue->instruction) {
          qr.parse_correct = true;
          result.parse_correct += 1;
        }
      }
      if (!match) {
        qr.reason = "no location match";
      } else if (is_locational(match->instruction)) {
        qr.reason = "locational-only match";
      } else {
        const AtomRender r = render(map, match->sign_id, rcfg);
        const NavCue cue{match->location, match->instruction};
        const SelectedElement sel = grounder == Grounder::kVlm
                                        ? ground_vlm(r, cue, *vlm)
                                        : ground_geometric(r, cue);
        const Subgoal goal = to_subgoal(sel, r);
        qr.answer = answer_multiple_choice(query, goal.point, frames);
        qr.correct = query.truth && qr.answer == *query.truth;
      }
    } catch (const std::exception& e) {
      qr.reason = e.what();
    }
    if (qr.correct) result.correct += 1;
    result.queries.push_back(std::move(qr));
  }
  return result;
}

/// Run every sequence directory under `dataset_dir` (any subdirectory with
/// sequence.json + queries.json). Sequences run in parallel; the report is
/// reduced in name order regardless of the job count. Per-query failures
/// are recorded, never thrown.
inline BenchReport run_benchmark(const std::filesystem::path& dataset_dir,
                                 Grounder grounder, const VlmFactory& make_vlm,
                                 const BuilderConfig& bcfg,
                                 const RenderConfig& rcfg,
                                 const SymbolDictionary& dict, int jobs = 0,
                                 double match_threshold = 0.6) {
  namespace fs = std::filesystem;
  std::vector<fs::path> seq_dirs;
  for (const auto& entry : fs::directory_iterator(dataset_dir))
    if (entry.is_directory() && fs::exists(entry.path() / "sequence.json") &&
        fs::exists(entry.path() / "queries.json"))
      seq_dirs.push_back(entry.path());
  std::sort(seq_dirs.begin(), seq_dirs.end());

  if (jobs <= 0) jobs = int(std::thread::hardware_concurrency());
  if (jobs <= 0) jobs = 1;

  BenchReport report;
  report.sequences.resize(seq_dirs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= seq_dirs.size()) return;
      try {
        report.sequences[i] =
            run_benchmark_sequence(seq_dirs[i], grounder, make_vlm, bcfg, rcfg,
                                   dict, match_threshold);
      } catch (const std::exception& e) {
        BenchSequenceResult failed;
        failed.name = seq_dirs[i].filename().string();
        BenchQueryResult qr;
        qr.reason = e.what();
        failed.total = 1;
        failed.queries.push_back(qr);
        report.sequences[i] = std::move(failed);
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min<int>(jobs, int(seq_dirs.size())); ++t)
    pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  for (const auto& s : report.sequences) {
    report.correct += s.correct;
    report.total += s.total;
    report.parse_correct += s.parse_correct;
    report.parse_total += s.parse_total;
  }
  return report;
}

}  // namespace atomnav
