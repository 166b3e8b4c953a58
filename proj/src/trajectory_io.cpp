#include "soup/trajectory_io.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "soup/tasks.hpp"

namespace soup {

std::string to_json_line(const TrajectoryRecord& rec) {
  const auto& t = rec.trajectory;
  std::string prov;
  prov.reserve(t.provenance.size());
  for (auto p : t.provenance) prov += p == Provenance::offpolicy_prefix ? 'P' : 'S';
  nlohmann::json j = {
      {"step", rec.step},
      {"group", rec.group},
      {"index", rec.index},
      {"prompt", format_tokens(t.prompt)},
      {"answer", format_tokens(rec.answer)},
      {"tokens", format_tokens(t.tokens)},
      {"provenance", prov},
      {"truncation_index", t.truncation_index},
      {"reward", rec.reward},
      {"gen_logprob", t.gen_logprob},
      {"gen_entropy", t.gen_entropy},
      {"clipped", rec.clipped},
  };
  return j.dump();
}

TrajectoryRecord parse_json_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  TrajectoryRecord rec;
  rec.step = j.at("step").get<std::int64_t>();
  rec.group = j.at("group").get<std::size_t>();
  rec.index = j.at("index").get<std::size_t>();
  rec.answer = parse_tokens(j.at("answer").get<std::string>());
  rec.reward = j.at("reward").get<double>();
  auto& t = rec.trajectory;
  t.prompt = parse_tokens(j.at("prompt").get<std::string>());
  t.tokens = parse_tokens(j.at("tokens").get<std::string>());
  t.truncation_index = j.at("truncation_index").get<std::size_t>();
  t.gen_logprob = j.at("gen_logprob").get<std::vector<double>>();
  t.gen_entropy = j.at("gen_entropy").get<std::vector<double>>();
  for (char c : j.at("provenance").get<std::string>()) {
    if (c != 'P' && c != 'S') throw std::runtime_error("bad provenance flag in dump");
    t.provenance.push_back(c == 'P' ? Provenance::offpolicy_prefix : Provenance::onpolicy_suffix);
  }
  if (j.contains("clipped")) rec.clipped = j.at("clipped").get<std::vector<bool>>();
  t.validate(Vocabulary::digits().eos);
  return rec;
}

std::vector<TrajectoryRecord> read_trajectory_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read trajectory dump " + path.string());
  std::vector<TrajectoryRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse_json_line(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace soup
