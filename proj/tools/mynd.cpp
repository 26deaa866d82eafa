// mynd: command-line front end for simulation, prior learning and decoding.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mynd/mynd.hpp"
#include "mynd/datastore/stub_server.hpp"

namespace fs = std::filesystem;
using namespace mynd;

namespace {

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size() || !(v > 0.0)) throw CLI::ValidationError("--lambda-grid", "positive numbers expected");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--lambda-grid", "empty grid");
  return out;
}

std::vector<int> parse_days(const std::string& s, int max_day) {
  std::vector<int> out;
  const auto dash = s.find('-');
  if (dash != std::string::npos) {
    const int a = std::stoi(s.substr(0, dash));
    const int b = std::stoi(s.substr(dash + 1));
    for (int d = a; d <= b; ++d) out.push_back(d);
  } else {
    out.push_back(std::stoi(s));
  }
  for (int d : out)
    if (d < 1 || d > max_day) throw CLI::ValidationError("--day", "day outside 1.." + std::to_string(max_day));
  return out;
}

std::string read_or_create_subject(const fs::path& out) {
  const fs::path f = out / "subject.id";
  std::ifstream is(f);
  std::string id;
  if (is && std::getline(is, id) && !id.empty()) return id;
  id = datastore::generate_subject_id();
  fs::create_directories(out);
  std::ofstream(f) << id << '\n';
  return id;
}

datastore::StubServer* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"mynd: at-home EEG study simulation and decoding"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(app::kVersion));

  // keygen
  auto* keygen = app.add_subcommand("keygen", "Create an X25519 key pair for envelope encryption");
  std::string key_prefix = "mynd";
  keygen->add_option("--out", key_prefix, "Path prefix; writes <prefix>.pub and <prefix>.key")->required();

  // subject-id
  auto* subject_cmd = app.add_subcommand("subject-id", "Print a fresh pseudonymous subject token");

  // gen-corpus
  auto* corpus = app.add_subcommand("gen-corpus", "Generate a synthetic lab corpus");
  app::CorpusConfig ccfg;
  std::string corpus_profile;
  double corpus_depth = 0.5;
  corpus->add_option("--subjects", ccfg.subjects, "Number of lab subjects")->capture_default_str();
  corpus->add_option("--trials", ccfg.trials, "Trials per subject")->capture_default_str();
  corpus->add_option("--seed", ccfg.seed, "Seed")->capture_default_str();
  corpus->add_option("--profile", corpus_profile, "Base profile file")->check(CLI::ExistingFile);
  corpus->add_option("--depth", corpus_depth, "Alpha modulation depth of the built-in profile")->capture_default_str();
  corpus->add_option("--strategy", ccfg.options.strategy, "Strategy id")->capture_default_str();
  corpus->add_option("--tasks", ccfg.options.positive_task, "Positive task id")->capture_default_str();
  corpus->add_option("--contrast-task", ccfg.options.negative_task, "Negative task id")->capture_default_str();
  corpus->add_option("--out", ccfg.out, "Output directory")->required();

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run study days with a synthetic subject");
  std::string study_path, profile_path, days_arg = "1", public_key_path, subject;
  std::optional<double> battery;
  app::SimulateConfig scfg;
  sim->add_option("--study", study_path, "Study definition file (default: built-in)")->check(CLI::ExistingFile);
  sim->add_option("--day,--days", days_arg, "Day or range, e.g. 3 or 1-7")->capture_default_str();
  sim->add_option("--seed", scfg.seed, "Seed")->capture_default_str();
  sim->add_option("--subject", subject, "Subject token (default: stored in <out>/subject.id)");
  sim->add_option("--profile", profile_path, "Synthetic subject profile")->check(CLI::ExistingFile);
  sim->add_option("--battery", battery, "Simulated headset battery fraction")->check(CLI::Range(0.0, 1.0));
  sim->add_option("--transport", scfg.transport, "Upload transport")
      ->check(CLI::IsMember({"dir", "http"}))
      ->capture_default_str();
  sim->add_option("--server", scfg.server_url, "Server URL for the http transport");
  sim->add_option("--transport-dir", scfg.transport_dir, "Target directory for the dir transport");
  sim->add_option("--public-key", public_key_path, "Recipient public key")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", scfg.out, "Output directory")->required();
  sim->add_option("--line-freq", scfg.line_freq, "Mains frequency")
      ->check([](const std::string& v) { return v == "50" || v == "60" ? std::string{} : "must be 50 or 60"; })
      ->capture_default_str();
  sim->add_option("--locale", scfg.locale, "Locale")->capture_default_str();

  // learn-prior
  auto* learn = app.add_subcommand("learn-prior", "Learn a Gaussian prior from a lab corpus");
  app::LearnPriorConfig lcfg;
  std::string learn_grid;
  learn->add_option("--corpus", lcfg.corpus, "Corpus directory")->required();
  learn->add_option("--out", lcfg.out, "Prior file")->required();
  learn->add_option("--lambda", lcfg.options.lambda, "Regularization while learning")->capture_default_str();
  learn->add_option("--iterations", lcfg.options.max_iterations, "Iteration cap")->capture_default_str();
  learn->add_flag("--zero-mean", lcfg.options.zero_mean, "Keep the prior mean at zero");
  learn->add_option("--lambda-grid", learn_grid, "Grid stored with the prior, e.g. 0.01,0.1,1,10,100");

  // decode
  auto* dec = app.add_subcommand("decode", "Decode recordings and report accuracies");
  app::DecodeConfig dcfg;
  std::vector<std::string> prior_args;
  std::string private_key_path, decode_grid, strategies;
  dec->add_option("--recordings", dcfg.recordings, "Directory with envelopes or containers")->required();
  dec->add_option("--prior", prior_args, "Prior file, or strategy=file (repeatable)");
  dec->add_option("--private-key", private_key_path, "Private key for envelopes")->check(CLI::ExistingFile);
  dec->add_option("--lambda-grid", decode_grid, "Regularization grid (default: the prior's grid)");
  dec->add_option("--strategies", strategies, "Comma-separated strategies to decode");
  dec->add_option("--out", dcfg.out, "Output directory")->required();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the receiving stub server");
  std::string serve_root;
  int serve_port = 8080;
  serve->add_option("--root", serve_root, "Storage directory")->required();
  serve->add_option("--port", serve_port, "Port")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*keygen) {
      const auto kp = datastore::KeyPair::generate();
      if (const auto dir = fs::path(key_prefix).parent_path(); !dir.empty()) fs::create_directories(dir);
      datastore::save_public_key(key_prefix + ".pub", kp.public_key);
      datastore::save_secret_key(key_prefix + ".key", kp.secret_key);
      fs::permissions(key_prefix + ".key", fs::perms::owner_read | fs::perms::owner_write, fs::perm_options::replace);
      std::cout << "key id " << datastore::to_hex(datastore::key_id(kp.public_key)) << '\n';
      return 0;
    }
    if (*subject_cmd) {
      std::cout << datastore::generate_subject_id() << '\n';
      return 0;
    }
    if (*corpus) {
      ccfg.distribution.base = simkit::default_profile(corpus_depth);
      if (!corpus_profile.empty()) {
        ccfg.distribution.base = simkit::load_profile(corpus_profile);
        ccfg.profile_path = corpus_profile;
      }
      app::generate_corpus(ccfg, std::cout);
      return 0;
    }
    if (*sim) {
      if (!study_path.empty()) {
        scfg.study = session::load_study(study_path);
        scfg.study_path = study_path;
      }
      scfg.days = parse_days(days_arg, scfg.study.days);
      if (!profile_path.empty()) {
        scfg.profile = simkit::load_profile(profile_path);
        scfg.profile_path = profile_path;
      }
      scfg.battery = battery;
      scfg.public_key = datastore::load_public_key(public_key_path);
      scfg.subject = subject.empty() ? read_or_create_subject(scfg.out) : subject;
      const auto rep = app::simulate_session(scfg, std::cout);
      std::cout << "blocks: " << rep.blocks.size() << ", envelopes: " << rep.envelopes
                << ", uploaded: " << rep.uploaded << '\n';
      return rep.upload_errors.empty() ? 0 : 3;
    }
    if (*learn) {
      if (!learn_grid.empty()) lcfg.lambda_grid = parse_grid(learn_grid);
      app::learn_prior_from_corpus(lcfg, std::cout);
      return 0;
    }
    if (*dec) {
      std::optional<std::vector<double>> grid_from_prior;
      for (const auto& a : prior_args) {
        const auto eq = a.find('=');
        const std::string strategy = eq == std::string::npos ? "*" : a.substr(0, eq);
        const std::string path = eq == std::string::npos ? a : a.substr(eq + 1);
        const auto pf = decoder::load_prior(path);
        dcfg.priors[strategy] = pf.prior;
        dcfg.prior_paths[strategy] = path;
        if (!grid_from_prior) grid_from_prior = pf.lambda_grid;
      }
      if (!decode_grid.empty())
        dcfg.lambda_grid = parse_grid(decode_grid);
      else if (grid_from_prior && !grid_from_prior->empty())
        dcfg.lambda_grid = *grid_from_prior;
      if (!private_key_path.empty()) dcfg.private_key = datastore::load_secret_key(private_key_path);
      if (!strategies.empty()) {
        dcfg.strategies.clear();
        std::stringstream ss(strategies);
        std::string s;
        while (std::getline(ss, s, ','))
          if (!s.empty()) dcfg.strategies.push_back(s);
      }
      const auto out = app::decode_recordings(dcfg, std::cout);
      std::cout << "rows: " << out.rows.size() << ", mean accuracy: " << out.mean_accuracy() << '\n';
      if (out.mediators)
        for (const auto& c : out.mediators->correlations)
          if (c.result)
            std::cout << "mediator " << c.mediator << ": r=" << c.result->r << " p=" << c.result->p
                      << " n=" << c.result->n << '\n';
          else
            std::cout << "mediator " << c.mediator << ": " << c.error << '\n';
      else
        std::cout << "mediators: " << out.mediator_error << '\n';
      return 0;
    }
    if (*serve) {
      datastore::StubServer server(serve_root);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on 127.0.0.1:" << serve_port << std::endl;
      server.run(serve_port);
      g_server = nullptr;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
