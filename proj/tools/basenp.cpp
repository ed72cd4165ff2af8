// basenp: batch front end for the chunking workbench.
//
// Exit status: 0 success, 1 usage error, 2 data error (bad input files,
// parse errors, misaligned corpora).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "basenp/corpus.hpp"
#include "basenp/eval.hpp"
#include "basenp/pattern.hpp"
#include "basenp/ruledsl.hpp"
#include "basenp/service.hpp"
#include "basenp/service_http.hpp"
#include "basenp/tbl.hpp"
#include "json.hpp"

namespace {

using namespace basenp;

struct DataError : Error
{
  using Error::Error;
};

std::string slurp(const std::string& path)
{
  if (path == "-") return std::string(std::istreambuf_iterator<char>(std::cin), {});
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit(const std::string& path, const std::string& content)
{
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << content;
}

Corpus load(const std::string& path, const std::string& format, const std::string& label = {})
{
  auto f = corpus_format_from(format);
  if (!f) throw CLI::ValidationError("--format", "unknown corpus format " + format);
  try {
    return parse_corpus(slurp(path), *f, label);
  } catch (const ParseError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::string dump(const Corpus& c, const std::string& format)
{
  return serialize_corpus(c, *corpus_format_from(format));
}

RuleList load_rules(const std::string& path)
{
  try {
    return parse_rule_list(slurp(path));
  } catch (const ParseError& e) {
    throw DataError(path + ": " + e.what());
  }
}

const std::vector<std::string> kCorpusFormats{"slash", "flat", "column"};

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Base noun phrase chunking workbench"};
  app.require_subcommand(1);

  std::string in_format = "slash", out_format = "slash", report_format = "table", output;

  // convert
  auto* convert = app.add_subcommand("convert", "Convert a corpus between slash, flat and column formats");
  std::string convert_in;
  convert->add_option("input", convert_in, "Input corpus ('-' for stdin)")->required();
  convert->add_option("--from", in_format, "Input format")->check(CLI::IsMember(kCorpusFormats));
  convert->add_option("--to", out_format, "Output format")->check(CLI::IsMember(kCorpusFormats));
  convert->add_option("-o,--output", output, "Output file (default stdout)");

  // strip
  auto* strip = app.add_subcommand("strip", "Remove all base-NP annotation");
  std::string strip_in;
  strip->add_option("input", strip_in)->required();
  strip->add_option("--format", in_format, "Corpus format (input and output)")->check(CLI::IsMember(kCorpusFormats));
  strip->add_option("-o,--output", output);

  // apply
  auto* apply = app.add_subcommand("apply", "Run a rule list over a corpus");
  std::string apply_in, apply_rules;
  apply->add_option("input", apply_in)->required();
  apply->add_option("-r,--rules", apply_rules, "Rule list file")->required();
  apply->add_option("--format", in_format, "Corpus format (input and output)")->check(CLI::IsMember(kCorpusFormats));
  apply->add_option("-o,--output", output);

  // learn
  auto* learn_cmd = app.add_subcommand("learn", "Learn a transformation-based chunker");
  std::string learn_in, learn_rules_out, learn_map_out, learn_templates;
  std::size_t min_gain = 2, max_rules = 500;
  learn_cmd->add_option("input", learn_in, "Gold training corpus")->required();
  learn_cmd->add_option("--format", in_format)->check(CLI::IsMember(kCorpusFormats));
  learn_cmd->add_option("--min-gain", min_gain, "Stop when the best rule fixes fewer errors (net)")
    ->check(CLI::PositiveNumber);
  learn_cmd->add_option("--max-rules", max_rules, "Maximum number of rules");
  learn_cmd->add_option("--templates", learn_templates, "Template file (default: built-in set)");
  learn_cmd->add_option("--rules-out", learn_rules_out, "Learned rule file")->required();
  learn_cmd->add_option("--map-out", learn_map_out, "Baseline map file")->required();
  learn_cmd->add_option("--report", report_format, "Summary format")->check(CLI::IsMember({"table", "json"}));

  // tag
  auto* tag = app.add_subcommand("tag", "Chunk a corpus with a learned model");
  std::string tag_in, tag_rules, tag_map;
  tag->add_option("input", tag_in)->required();
  tag->add_option("--rules", tag_rules, "Learned rule file")->required();
  tag->add_option("--map", tag_map, "Baseline map file")->required();
  tag->add_option("--format", in_format)->check(CLI::IsMember(kCorpusFormats));
  tag->add_option("-o,--output", output);

  // eval
  auto* eval = app.add_subcommand("eval", "Score predicted chunks against the truth");
  std::string eval_truth, eval_pred;
  eval->add_option("truth", eval_truth)->required();
  eval->add_option("predicted", eval_pred)->required();
  eval->add_option("--in-format", in_format)->check(CLI::IsMember(kCorpusFormats));
  eval->add_option("--format", report_format)->check(CLI::IsMember({"table", "json"}));

  // freq
  auto* freq = app.add_subcommand("freq", "Test recall by training frequency of each NP's tag sequence");
  std::string freq_train, freq_test, freq_pred;
  std::size_t threshold = 6;
  freq->add_option("train", freq_train, "Gold training corpus")->required();
  freq->add_option("test", freq_test, "Gold test corpus")->required();
  freq->add_option("predicted", freq_pred, "System output on the test corpus")->required();
  freq->add_option("--in-format", in_format)->check(CLI::IsMember(kCorpusFormats));
  freq->add_option("--threshold", threshold, "Split point for the aggregate rows");
  freq->add_option("--format", report_format)->check(CLI::IsMember({"table", "json", "series"}));

  // compile-rule
  auto* compile = app.add_subcommand("compile-rule", "Print the flat-text substitution for each rule");
  std::string compile_in;
  compile->add_option("rules", compile_in, "Rule list file")->required();

  // check-cdcd
  auto* cdcd = app.add_subcommand("check-cdcd", "Check the ( CD CD ) TO ( CD CD ) regression fixture");
  std::string cdcd_truth, cdcd_out;
  cdcd->add_option("truth", cdcd_truth)->required();
  cdcd->add_option("output", cdcd_out)->required();
  cdcd->add_option("--in-format", in_format)->check(CLI::IsMember(kCorpusFormats));

  // serve
  auto* serve = app.add_subcommand("serve", "Run the workbench service");
  std::string root = "sessions", host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--root", root, "Session directory");
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*convert) {
      emit(output, dump(load(convert_in, in_format), out_format));
    } else if (*strip) {
      emit(output, dump(strip_spans(load(strip_in, in_format)), in_format));
    } else if (*apply) {
      emit(output, dump(apply_rule_list(load_rules(apply_rules), load(apply_in, in_format)), in_format));
    } else if (*learn_cmd) {
      LearnerConfig cfg;
      cfg.min_gain = min_gain;
      cfg.max_rules = max_rules;
      try {
        cfg.templates = learn_templates.empty() ? default_templates() : parse_templates(slurp(learn_templates));
      } catch (const ParseError& e) {
        throw DataError(learn_templates + ": " + e.what());
      }
      auto model = learn(load(learn_in, in_format, "train"), cfg);
      emit(learn_rules_out, serialize_model_rules(model.rules));
      emit(learn_map_out, serialize_baseline(model.baseline));
      std::size_t final_errors = model.rules.empty() ? model.baseline_errors : model.rules.back().errors_after;
      if (report_format == "json") {
        std::cerr << nlohmann::json{{"rules", model.rules.size()},
                                    {"baseline_errors", model.baseline_errors},
                                    {"final_errors", final_errors}}.dump()
                  << "\n";
      } else {
        std::cerr << "learned " << model.rules.size() << " rules; training tag errors " << model.baseline_errors
                  << " -> " << final_errors << "\n";
      }
    } else if (*tag) {
      std::vector<TblRule> rules;
      BaselineMap map;
      try {
        for (const auto& r : parse_model_rules(slurp(tag_rules))) rules.push_back(r.rule);
      } catch (const ParseError& e) {
        throw DataError(tag_rules + ": " + e.what());
      }
      try {
        map = parse_baseline(slurp(tag_map));
      } catch (const ParseError& e) {
        throw DataError(tag_map + ": " + e.what());
      }
      emit(output, dump(apply_tbl(rules, map, load(tag_in, in_format)), in_format));
    } else if (*eval) {
      auto r = score(load(eval_truth, in_format), load(eval_pred, in_format));
      emit("", report_format == "json" ? to_json(r).dump(2) + "\n" : report_table(r, eval_pred));
    } else if (*freq) {
      auto test = load(freq_test, in_format);
      auto fa = freq_recall(load(freq_train, in_format), test, load(freq_pred, in_format), threshold);
      if (report_format == "json") emit("", to_json(fa).dump(2) + "\n");
      else if (report_format == "series") emit("", freq_series(fa));
      else emit("", freq_table(fa));
    } else if (*compile) {
      auto rl = load_rules(compile_in);
      for (const auto& r : rl.rules()) std::cout << compile_flat(r.before, r.target, r.after) << "\n";
    } else if (*cdcd) {
      auto r = cd_cd_fixture_check(load(cdcd_truth, in_format), load(cdcd_out, in_format));
      std::cout << (r.pass ? "PASS" : "FAIL") << ": " << r.detail << "\n";
      return r.pass ? 0 : 2;
    } else if (*serve) {
      Service service(root);
      httplib::Server server;
      install_routes(server, service);
      std::cerr << "serving " << service.session_ids().size() << " session(s) from " << root << " on http://"
                << host << ":" << port << "\n";
      if (!server.listen(host, port)) throw DataError("cannot listen on " + host + ":" + std::to_string(port));
    }
  } catch (const CLI::Error& e) {
    std::cerr << "basenp: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "basenp: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
