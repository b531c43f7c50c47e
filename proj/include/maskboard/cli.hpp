#pragma once

#include <pthread.h>
#include <signal.h>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "maskboard/backends/registry.hpp"
#include "maskboard/cohort.hpp"
#include "maskboard/service.hpp"

namespace maskboard::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::int64_t now_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

/// Flags shared by commands that talk to an embedding provider.
struct ProviderFlags {
  std::size_t dimension = 64;
  std::string endpoint;
  std::string model;

  void attach(CLI::App* app) {
    app->add_option("--dim", dimension, "Embedding dimension")->check(CLI::PositiveNumber);
    app->add_option("--endpoint", endpoint, "Remote embeddings URL (remote provider)");
    app->add_option("--embed-model", model, "Remote embedding model name");
  }

  ProviderSettings settings() const {
    ProviderSettings s;
    s.test_dimension = dimension;
    if (!endpoint.empty()) s.remote = RemoteEmbeddingOptions{endpoint, model, dimension};
    return s;
  }
};

inline std::pair<std::string, int> parse_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw invalid("--bind expects HOST:PORT");
  int port = 0;
  try {
    port = std::stoi(bind.substr(colon + 1));
  } catch (const std::exception&) {
    throw invalid("--bind expects HOST:PORT");
  }
  if (port < 0 || port > 65535) throw invalid("port out of range");
  return {bind.substr(0, colon), port};
}

}  // namespace detail

/// Parses argv, runs one verb against the project and returns the exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  using detail::fixed;
  CLI::App app{"maskboard: occlusion explanations and theme exploration for text classifiers",
               "maskboard"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string project_dir = ".";
  app.add_option("--project,-p", project_dir, "Project directory");
  app.set_version_flag("--version", std::string(kToolVersion));

  std::function<void()> action;
  auto open = [&] { return Project::open(project_dir); };

  // init
  std::string project_name;
  auto* init = app.add_subcommand("init", "Create an empty project");
  init->add_option("--name", project_name, "Project name");
  init->callback([&] {
    action = [&] {
      Project::init(project_dir, project_name);
      out << "initialised " << project_dir << "\n";
    };
  });

  // ingest
  std::string in_file;
  std::string name;
  auto* ingest = app.add_subcommand("ingest", "Load a JSON-lines post dump as a corpus");
  ingest->add_option("--in", in_file, "Input file")->required();
  ingest->add_option("--name", name, "Corpus name")->required();
  ingest->callback([&] {
    action = [&] {
      auto project = open();
      const auto corpus = load_posts_file(in_file, name);
      put_corpus(project, corpus);
      out << "corpus " << corpus.name << ": " << corpus.posts.size() << " posts, "
          << corpus.manifest.skipped << " skipped\n";
    };
  });

  // cohort
  std::string corpus_name;
  std::string anxiety = "Anxiety";
  std::string adhd = "ADHD";
  std::int64_t window_days = 183;
  std::optional<std::int64_t> cutoff;
  auto* cohort = app.add_subcommand("cohort", "Label authors by forum transition");
  cohort->add_option("--corpus", corpus_name, "Source corpus")->required();
  cohort->add_option("--anxiety", anxiety, "Origin forum");
  cohort->add_option("--adhd", adhd, "Destination forum");
  cohort->add_option("--window-days", window_days, "Exclusion window in days");
  cohort->add_option("--cutoff", cutoff, "Ignore posts at or after this Unix time");
  cohort->add_option("--name", name, "Dataset name")->required();
  cohort->callback([&] {
    action = [&] {
      auto project = open();
      CohortConfig cfg;
      cfg.anxiety_forum = anxiety;
      cfg.adhd_forum = adhd;
      cfg.exclusion_window = window_days * kSecondsPerDay;
      if (cutoff) cfg.cutoff_date = *cutoff;
      auto result = build_transition_cohort(get_corpus(project, corpus_name), cfg);
      result.dataset.name = name;
      put_dataset(project, result.dataset);
      out << "dataset " << name << ": " << result.dataset.examples.size() << " examples ("
          << result.dataset.positives() << " positive), " << result.stats.positive_authors
          << " positive authors, " << result.stats.negative_authors << " negative authors\n";
    };
  });

  // filter
  std::string keyword;
  auto* filter = app.add_subcommand("filter", "Keep posts mentioning a keyword");
  filter->add_option("--corpus", corpus_name, "Source corpus")->required();
  filter->add_option("--keyword", keyword, "Case-insensitive keyword")->required();
  filter->add_option("--name", name, "Output corpus name");
  filter->callback([&] {
    action = [&] {
      auto project = open();
      const auto result = filter_keyword(get_corpus(project, corpus_name), keyword, name);
      put_corpus(project, result);
      out << "corpus " << result.name << ": " << result.posts.size() << " posts\n";
    };
  });

  // label
  std::string labels_file;
  auto* label = app.add_subcommand("label", "Attach manual labels to posts of a corpus");
  label->add_option("--corpus", corpus_name, "Source corpus")->required();
  label->add_option("--labels", labels_file, "JSON lines with post_id and label")->required();
  label->add_option("--name", name, "Dataset name")->required();
  label->callback([&] {
    action = [&] {
      auto project = open();
      const auto d = label_manual(get_corpus(project, corpus_name), read_file(labels_file), name);
      put_dataset(project, d);
      out << "dataset " << d.name << ": " << d.examples.size() << " examples ("
          << d.positives() << " positive)\n";
    };
  });

  // split
  std::string dataset_name;
  double test_frac = 0.2;
  std::uint64_t seed = 0;
  auto* split_cmd = app.add_subcommand("split", "Author-grouped train/test split");
  split_cmd->add_option("--dataset", dataset_name, "Dataset")->required();
  split_cmd->add_option("--test-frac", test_frac, "Test fraction");
  split_cmd->add_option("--seed", seed, "Shuffle seed")->required();
  split_cmd->callback([&] {
    action = [&] {
      auto project = open();
      const auto result = split(get_dataset(project, dataset_name), test_frac, seed);
      put_dataset(project, result.train);
      put_dataset(project, result.test);
      out << "dataset " << result.train.name << ": " << result.train.examples.size()
          << " examples\n"
          << "dataset " << result.test.name << ": " << result.test.examples.size()
          << " examples\n";
    };
  });

  // balance
  auto* balance_cmd = app.add_subcommand("balance", "Downsample the majority class");
  balance_cmd->add_option("--dataset", dataset_name, "Dataset")->required();
  balance_cmd->add_option("--seed", seed, "Sampling seed")->required();
  balance_cmd->callback([&] {
    action = [&] {
      auto project = open();
      const auto d = balance(get_dataset(project, dataset_name), seed);
      put_dataset(project, d);
      out << "dataset " << d.name << ": " << d.examples.size() << " examples ("
          << d.positives() << " positive)\n";
    };
  });

  // train
  std::string backend;
  std::string model_name;
  std::optional<double> alpha;
  std::optional<double> l2;
  auto* train_cmd = app.add_subcommand("train", "Fit a classifier");
  train_cmd->add_option("--backend", backend, "linear, nb or transformer")
      ->required()
      ->check(CLI::IsMember({"linear", "nb", "transformer"}));
  train_cmd->add_option("--dataset", dataset_name, "Training dataset")->required();
  train_cmd->add_option("--seed", seed, "Training seed")->required();
  train_cmd->add_option("--name", model_name, "Model name")->required();
  train_cmd->add_option("--alpha", alpha, "Smoothing (nb)");
  train_cmd->add_option("--l2", l2, "L2 penalty (linear)");
  train_cmd->callback([&] {
    action = [&] {
      auto project = open();
      BackendSpec spec{backend, nlohmann::json::object()};
      if (alpha) spec.hyperparameters["alpha"] = *alpha;
      if (l2) spec.hyperparameters["l2"] = *l2;
      const auto model = train(spec, get_dataset(project, dataset_name), seed);
      const auto hash = put_model(project, model_name, model);
      out << "model " << model_name << ": backend " << backend << ", hash " << hash << "\n";
    };
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Score a model on a labelled dataset");
  eval->add_option("--model", model_name, "Model")->required();
  eval->add_option("--dataset", dataset_name, "Evaluation dataset")->required();
  eval->callback([&] {
    action = [&] {
      auto project = open();
      const auto m = evaluate(get_model(project, model_name), get_dataset(project, dataset_name));
      out << "n " << m.n << "\n"
          << "accuracy " << fixed(m.accuracy) << "\n"
          << "precision " << fixed(m.precision) << "\n"
          << "recall " << fixed(m.recall) << "\n"
          << "f1 " << fixed(m.f1) << "\n"
          << "tp " << m.tp << " fp " << m.fp << " tn " << m.tn << " fn " << m.fn << "\n";
    };
  });

  // classify
  double threshold = kDecisionThreshold;
  auto* classify = app.add_subcommand("classify", "Score every post of a corpus");
  classify->add_option("--model", model_name, "Model")->required();
  classify->add_option("--corpus", corpus_name, "Corpus")->required();
  classify->add_option("--threshold", threshold, "Decision threshold");
  classify->callback([&] {
    action = [&] {
      auto project = open();
      out << serialize_predictions(classify_corpus(get_model(project, model_name),
                                                   get_corpus(project, corpus_name), threshold));
    };
  });

  // explain
  std::size_t top_k = 5;
  double min_influence = 0.05;
  std::string format = "plain";
  bool quiet = false;
  auto* explain_cmd = app.add_subcommand("explain", "Occlusion explanations for a corpus");
  explain_cmd->add_option("--model", model_name, "Model")->required();
  explain_cmd->add_option("--corpus", corpus_name, "Corpus")->required();
  explain_cmd->add_option("--top-k", top_k, "Phrases highlighted per post")
      ->check(CLI::PositiveNumber);
  explain_cmd->add_option("--min-influence", min_influence, "Minimum influence to highlight");
  explain_cmd->add_option("--format", format, "plain, ansi or html")
      ->check(CLI::IsMember({"plain", "ansi", "html"}));
  explain_cmd->add_flag("--quiet", quiet, "Store without printing");
  explain_cmd->callback([&] {
    action = [&] {
      auto project = open();
      const auto model = get_model(project, model_name);
      const auto corpus = get_corpus(project, corpus_name);
      const HighlightPolicy policy{top_k, min_influence};
      ExplanationSet set;
      set.corpus = corpus.name;
      set.manifest["model"] = model_name;
      set.manifest["model_hash"] = model_hash(model);
      set.manifest["policy"] = describe_policy(policy, SegmenterOptions{});
      const auto fmt = render_format_from_string(format);
      for (const auto& post : corpus.posts) {
        set.explanations.push_back(explain(model, post.text(), post.id, policy));
        if (!quiet) {
          out << "== " << post.id << " score=" << fixed(set.explanations.back().base_score)
              << "\n"
              << render_highlights(post.text(), set.explanations.back(), fmt) << "\n";
        }
      }
      put_explanations(project, set);
      out << "explained " << set.explanations.size() << " posts of " << corpus.name << "\n";
    };
  });

  // expand
  auto* expand = app.add_subcommand("expand", "Keep posts the model predicts positive");
  expand->add_option("--model", model_name, "Model")->required();
  expand->add_option("--corpus", corpus_name, "Keyword corpus")->required();
  expand->add_option("--threshold", threshold, "Decision threshold");
  expand->add_option("--name", name, "Output corpus name");
  expand->callback([&] {
    action = [&] {
      auto project = open();
      const auto model = get_model(project, model_name);
      const auto result = expand_dataset(model, get_corpus(project, corpus_name), threshold,
                                         model_hash(model), name);
      put_corpus(project, result);
      out << "corpus " << result.name << ": " << result.posts.size() << " posts\n";
    };
  });

  // index
  std::string provider_kind = "test";
  std::string source = "explanations";
  detail::ProviderFlags provider_flags;
  auto* index_cmd = app.add_subcommand("index", "Embed phrases of a corpus for search");
  index_cmd->add_option("--provider", provider_kind, "test or remote")
      ->check(CLI::IsMember({"test", "remote"}));
  index_cmd->add_option("--corpus", corpus_name, "Corpus")->required();
  index_cmd->add_option("--source", source, "explanations (highlighted phrases) or phrases (all)")
      ->check(CLI::IsMember({"explanations", "phrases"}));
  provider_flags.attach(index_cmd);
  index_cmd->callback([&] {
    action = [&] {
      auto project = open();
      auto provider = make_provider(provider_kind, provider_flags.settings());
      EmbeddingCache cache(project.root() / "cache" / "embeddings");
      Embedder embedder(*provider, cache);
      const auto corpus = get_corpus(project, corpus_name);
      const auto index =
          source == "phrases"
              ? build_index(embedder, corpus)
              : build_index(embedder, corpus, get_explanations(project, corpus_name).explanations);
      put_index(project, index, provider->provider_id());
      out << "index " << index.corpus << ": " << index.entries.size() << " phrases, dimension "
          << index.dimension << ", provider " << provider->provider_id() << "\n";
    };
  });

  // theme
  std::string theme_ref;
  std::vector<std::string> members;
  std::string notes;
  auto* theme = app.add_subcommand("theme", "Manage themes");
  theme->require_subcommand(1);
  auto* theme_create = theme->add_subcommand("create", "Create a theme");
  theme_create->add_option("--name", name, "Theme name")->required();
  theme_create->add_option("--member", members, "Member phrase (repeatable)");
  theme_create->add_option("--notes", notes, "Free-text notes");
  theme_create->callback([&] {
    action = [&] {
      auto project = open();
      const auto t = create_theme(project, name, members, notes);
      out << "theme " << t.id << ": " << t.name << " (" << t.members.size() << " members)\n";
    };
  });
  auto* theme_list = theme->add_subcommand("list", "List themes");
  theme_list->callback([&] {
    action = [&] {
      const auto project = open();
      for (const auto& t : list_themes(project)) {
        out << t.id << "\t" << t.name << "\t" << t.members.size() << "\n";
      }
    };
  });
  auto* theme_add = theme->add_subcommand("add", "Add member phrases to a theme");
  theme_add->add_option("--theme", theme_ref, "Theme id or name")->required();
  theme_add->add_option("--member", members, "Member phrase (repeatable)")->required();
  theme_add->callback([&] {
    action = [&] {
      Workbench wb(open());
      const auto t = wb.add_members(theme_ref, members);
      out << "theme " << t.id << ": " << t.members.size() << " members\n";
    };
  });
  auto* theme_delete = theme->add_subcommand("delete", "Delete a theme");
  theme_delete->add_option("--theme", theme_ref, "Theme id or name")->required();
  theme_delete->callback([&] {
    action = [&] {
      Workbench wb(open());
      wb.remove(theme_ref);
      out << "deleted " << theme_ref << "\n";
    };
  });

  // review
  std::string post_id;
  std::string phrase;
  std::size_t rank = 0;
  std::string verdict;
  std::string reviewer;
  std::optional<std::int64_t> at;
  bool amend = false;
  std::size_t window = 300;
  auto* review = app.add_subcommand("review", "Record a verdict for a search match");
  review->add_option("--theme", theme_ref, "Theme id or name")->required();
  review->add_option("--corpus", corpus_name, "Corpus")->required();
  review->add_option("--post", post_id, "Post id")->required();
  review->add_option("--phrase", phrase, "Matched phrase")->required();
  review->add_option("--rank", rank, "Rank in the search result")->required();
  review->add_option("--verdict", verdict, "match, non_match or unsure")
      ->required()
      ->check(CLI::IsMember({"match", "non_match", "unsure"}));
  review->add_option("--reviewer", reviewer, "Reviewer name");
  review->add_option("--at", at, "Review time (Unix seconds)");
  review->add_flag("--amend", amend, "Replace an earlier verdict");
  review->add_option("--window", window, "Counting window");
  review->callback([&] {
    action = [&] {
      Workbench wb(open());
      const ReviewRecord r{theme_ref, corpus_name, post_id, phrase, rank,
                           verdict_from_string(verdict), reviewer,
                           at ? *at : detail::now_seconds(), amend};
      const auto c = wb.review(r, window);
      out << "reviewed: " << c.k << "/" << c.denominator() << " match"
          << (c.partial ? " (partial)" : "") << "\n";
    };
  });

  // search
  std::size_t n = 300;
  bool as_json = false;
  auto* search = app.add_subcommand("search", "Rank indexed phrases against a theme");
  search->add_option("--theme", theme_ref, "Theme id or name")->required();
  search->add_option("--corpus", corpus_name, "Indexed corpus")->required();
  search->add_option("--n", n, "Number of matches")->check(CLI::PositiveNumber);
  search->add_flag("--json", as_json, "JSON output");
  provider_flags.attach(search);
  search->callback([&] {
    action = [&] {
      Workbench wb(open(), provider_flags.settings());
      const auto result = wb.search(theme_ref, corpus_name, n);
      if (as_json) {
        out << search_to_json(result.result).dump(2) << "\n";
        return;
      }
      std::size_t r = 0;
      for (const auto& m : result.result.matches) {
        const auto& e = result.index->entries[m.entry];
        out << ++r << "\t" << fixed(m.cosine, 6) << "\t" << e.post_id << "\t" << e.phrase << "\n";
      }
    };
  });

  // compare
  std::string corpus_a;
  std::string corpus_b;
  std::string compare_format = "table";
  auto* compare = app.add_subcommand("compare", "Compare a theme's match rate across corpora");
  compare->add_option("--theme", theme_ref, "Theme id or name")->required();
  compare->add_option("--a", corpus_a, "First corpus")->required();
  compare->add_option("--b", corpus_b, "Second corpus")->required();
  compare->add_option("--window", window, "Counting window");
  compare->add_option("--format", compare_format, "table, tsv or json")
      ->check(CLI::IsMember({"table", "tsv", "json"}));
  compare->callback([&] {
    action = [&] {
      Workbench wb(open());
      const auto r = wb.compare(theme_ref, corpus_a, corpus_b, window);
      if (compare_format == "tsv") {
        out << comparisons_to_tsv({r});
      } else if (compare_format == "json") {
        out << comparison_to_json(r).dump(2) << "\n";
      } else {
        out << render_report({r}, corpus_a, corpus_b);
      }
    };
  });

  // serve
  std::string bind = "127.0.0.1:8787";
  std::string token;
  std::string static_dir;
  auto* serve = app.add_subcommand("serve", "Run the workbench HTTP service");
  serve->add_option("--bind", bind, "HOST:PORT");
  serve->add_option("--token", token, "Access token (required off loopback)");
  serve->add_option("--static", static_dir, "Directory of UI assets");
  provider_flags.attach(serve);
  serve->callback([&] {
    action = [&] {
      ServiceOptions options;
      std::tie(options.host, options.port) = detail::parse_bind(bind);
      if (!token.empty()) options.token = token;
      if (!static_dir.empty()) options.static_dir = static_dir;
      options.providers = provider_flags.settings();
      Service service(open(), options);
      const int port = service.bind();
      out << "serving " << project_dir << " on http://" << options.host << ":" << port << "\n"
          << std::flush;
      sigset_t signals;
      sigemptyset(&signals);
      sigaddset(&signals, SIGINT);
      sigaddset(&signals, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &signals, nullptr);
      std::thread waiter([&service, signals] {
        int received = 0;
        sigwait(&signals, &received);
        service.stop();
      });
      waiter.detach();
      service.run();
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    if (e.get_exit_code() != 0) {
      err << app.help();
      return kExitUsage;
    }
    return kExitOk;
  }
  if (!action) {
    err << app.help();
    return kExitUsage;
  }
  try {
    action();
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace maskboard::cli
