// iconic: command-line front end for the iconicity pipeline.
//
// Every subcommand accepts `--config FILE` with flat key=value lines; keys
// are long option names without the leading dashes. Flags given on the
// command line override the file. The effective configuration is echoed as
// `#` comment lines at the top of every output.

#include "iconic/iconic.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace {

using namespace iconic;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

/// Options of one subcommand plus a printer for each, in registration order.
class Command {
public:
    Command(CLI::App& app, const std::string& name, const std::string& help) : sub_(app.add_subcommand(name, help)) {
        sub_->add_option("--config", config_, "flat key=value config file (flags override it)");
        add("--threads", threads_, "maximum worker threads")->check(CLI::PositiveNumber);
    }

    template <typename T>
    CLI::Option* add(const std::string& flag, T& var, const std::string& help) {
        echo_.push_back({flag.substr(2), [&var] { return show(var); }});
        return sub_->add_option(flag, var, help);
    }

    CLI::Option* add_flag(const std::string& flag, bool& var, const std::string& help) {
        echo_.push_back({flag.substr(2), [&var] { return std::string(var ? "true" : "false"); }});
        return sub_->add_flag(flag, var, help);
    }

    /// key=value lines for every option except --config.
    std::vector<std::string> describe(const std::string& command) const {
        std::vector<std::string> out{"command=" + command};
        for (const auto& [key, fn] : echo_) out.push_back(key + "=" + fn());
        return out;
    }

    CLI::App* app() const { return sub_; }
    int threads() const { return threads_; }

private:
    static std::string show(const std::string& s) { return s; }
    static std::string show(double v) { return csv::format_double(v); }
    template <typename T>
    static std::string show(const T& v) {
        return std::to_string(v);
    }

    CLI::App* sub_;
    std::string config_;
    int threads_ = 1;
    std::vector<std::pair<std::string, std::function<std::string()>>> echo_;
};

std::vector<std::size_t> parse_widths(const std::string& s) {
    std::vector<std::size_t> out;
    for (const auto& cell : csv::split(s)) {
        const auto v = csv::parse_int(cell);
        if (!v || *v <= 0) throw std::invalid_argument("widths: bad entry '" + cell + "'");
        out.push_back(static_cast<std::size_t>(*v));
    }
    return out;
}

std::vector<double> parse_doubles(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& cell : csv::split(s)) {
        const auto v = csv::parse_double(cell);
        if (!v) throw std::invalid_argument(what + ": bad entry '" + cell + "'");
        out.push_back(*v);
    }
    return out;
}

/// Replaces `--config FILE` by the file's key=value pairs as `--key=value`
/// arguments placed before the remaining flags, so explicit flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::vector<std::string> rest;
    std::vector<std::string> from_file;
    for (std::size_t k = 0; k < args.size(); ++k) {
        std::string path;
        if (args[k] == "--config" && k + 1 < args.size()) {
            path = args[++k];
        } else if (args[k].rfind("--config=", 0) == 0) {
            path = args[k].substr(9);
        } else {
            rest.push_back(args[k]);
            continue;
        }
        std::ifstream in(path);
        if (!in) throw CLI::FileError::Missing(path);
        std::string line;
        while (std::getline(in, line)) {
            const auto text = CLI::detail::trim_copy(line);
            if (text.empty() || text.front() == '#') continue;
            const auto eq = text.find('=');
            if (eq == std::string::npos) throw CLI::ConversionError("config line without '=': " + text);
            const auto key = CLI::detail::trim_copy(text.substr(0, eq));
            const auto value = CLI::detail::trim_copy(text.substr(eq + 1));
            from_file.push_back("--" + key + "=" + value);
        }
    }
    // Keep the subcommand name first.
    if (rest.empty()) return from_file;
    std::vector<std::string> out{rest.front()};
    out.insert(out.end(), from_file.begin(), from_file.end());
    out.insert(out.end(), rest.begin() + 1, rest.end());
    return out;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool has_covariate_everywhere(const Dataset& ds, const std::string& name) {
    return !ds.empty() && std::all_of(ds.records().begin(), ds.records().end(),
                                      [&](const EmbeddingRecord& r) { return r.covariates.count(name) > 0; });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Iconicity scoring of face embeddings: synthesis, training, pooling and evaluation."};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);

    // ---- gen
    Command gen(app, "gen", "generate a synthetic embedding dataset");
    SynthConfig synth;
    std::string gen_out, gen_mode = "two-level";
    gen.add("--out", gen_out, "output dataset CSV")->required();
    gen.add("--seed", synth.seed, "random seed");
    gen.add("--identities", synth.num_identities, "number of identities");
    gen.add("--images", synth.images_per_identity, "images per identity");
    gen.add("--dim", synth.dimension, "embedding dimension");
    gen.add("--iconic-fraction", synth.iconic_fraction, "fraction of iconic images (two-level mode)");
    gen.add("--sigma-lo", synth.iconic_noise, "noise scale of iconic images");
    gen.add("--sigma-hi", synth.junk_noise, "noise scale of junk images");
    gen.add("--media", synth.media_per_identity, "media groups per identity");
    gen.add("--mode", gen_mode, "degradation model")->check(CLI::IsMember({"two-level", "continuous"}));

    // ---- train
    Command tr(app, "train", "train the iconicity scorer on a dataset");
    TrainConfig tcfg;
    std::string tr_data, tr_model, tr_log, tr_widths = "512,256,128,64,1", tr_proxy = "auto",
                                            tr_threshold = "midrange";
    double tr_band = 0.25;
    tr.add("--data", tr_data, "training dataset CSV")->required();
    tr.add("--model-out", tr_model, "output model file (JSON)")->required();
    tr.add("--loss-log", tr_log, "output loss log CSV (epoch,mean_loss)");
    tr.add("--margin", tcfg.margin, "hinge margin");
    tr.add("--n-pos", tcfg.n_pos, "positive pairs per epoch");
    tr.add("--n-neg", tcfg.n_neg, "negative pairs per epoch");
    tr.add("--batch-size", tcfg.batch_size, "mini-batch size");
    tr.add("--epochs", tcfg.epochs, "training epochs");
    tr.add("--lr", tcfg.learning_rate, "learning rate");
    tr.add("--momentum", tcfg.momentum, "momentum");
    tr.add("--seed", tcfg.seed, "random seed (init and pair sampling)");
    tr.add("--widths", tr_widths, "layer widths, comma separated, ending in 1");
    tr.add_flag("--selu-all-hidden", tcfg.selu_all_hidden, "apply SeLU on every hidden layer");
    tr.add("--proxy", tr_proxy, "quality proxy for the mixture filter")
        ->check(CLI::IsMember({"auto", "degradation", "feature-norm", "none"}));
    tr.add("--proxy-threshold", tr_threshold, "proxy value splitting iconic from non-iconic, or 'midrange' / 'median'");
    tr.add("--band", tr_band, "accepted distance of the non-iconic ratio from 0.5");

    // ---- score
    Command sc(app, "score", "score every record of a dataset");
    std::string sc_model, sc_data, sc_out;
    sc.add("--model", sc_model, "model file")->required();
    sc.add("--data", sc_data, "dataset CSV")->required();
    sc.add("--out", sc_out, "output CSV (image_id,score)")->required();

    // ---- pool-verify
    Command pv(app, "pool-verify", "pool templates and score a match list");
    std::string pv_data, pv_templates, pv_matches, pv_method = "quality", pv_scores, pv_model, pv_out;
    double pv_lambda = 0.3;
    pv.add("--data", pv_data, "dataset CSV")->required();
    pv.add("--templates", pv_templates, "template CSV (template_id,image_id)")->required();
    pv.add("--matches", pv_matches, "match CSV (template_a,template_b,genuine)")->required();
    pv.add("--method", pv_method, "pooling method")->check(CLI::IsMember({"quality", "media", "plain"}));
    pv.add("--lambda", pv_lambda, "quality pooling temperature");
    pv.add("--scores", pv_scores, "score CSV for quality pooling");
    pv.add("--model", pv_model, "model file, used to score records when --scores is absent");
    pv.add("--out", pv_out, "output similarity CSV")->required();

    // ---- eval-roc
    Command er(app, "eval-roc", "TPR at fixed FPR targets from a similarity CSV");
    std::string er_in, er_out, er_roc, er_targets = "0.0001,0.001,0.01,0.1";
    er.add("--similarities", er_in, "similarity CSV from pool-verify")->required();
    er.add("--fpr", er_targets, "FPR targets, comma separated");
    er.add("--out", er_out, "output TPR table CSV")->required();
    er.add("--roc-out", er_roc, "optional full ROC CSV");

    // ---- eval-covariates
    Command ec(app, "eval-covariates", "relate scores to a per-record covariate");
    std::string ec_scores, ec_data, ec_cov, ec_out;
    std::size_t ec_bins = 5, ec_hist = 10;
    bool ec_levels = false;
    ec.add("--scores", ec_scores, "score CSV")->required();
    ec.add("--data", ec_data, "dataset CSV")->required();
    ec.add("--covariate", ec_cov, "covariate name")->required();
    ec.add("--bins", ec_bins, "equal-count bins");
    ec.add_flag("--levels", ec_levels, "per-level distributions instead of bins");
    ec.add("--hist-bins", ec_hist, "histogram bins per level");
    ec.add("--out", ec_out, "output CSV")->required();

    // ---- probe
    Command pr(app, "probe", "linear probe of a covariate from the embeddings");
    std::string pr_data, pr_cov, pr_out;
    std::uint64_t pr_seed = 1;
    double pr_fraction = 0.6, pr_ridge = 1e-6;
    pr.add("--data", pr_data, "dataset CSV")->required();
    pr.add("--covariate", pr_cov, "covariate name")->required();
    pr.add("--seed", pr_seed, "split seed");
    pr.add("--train-fraction", pr_fraction, "fraction of rows used for fitting");
    pr.add("--ridge", pr_ridge, "ridge penalty");
    pr.add("--out", pr_out, "optional report file");

    // ---- grad-check
    Command gc(app, "grad-check", "finite-difference check of the pair-loss gradient");
    std::uint64_t gc_seed = 1;
    std::size_t gc_seeds = 3, gc_dim = 16;
    std::string gc_widths = "16,8,4,2,1";
    double gc_margin = 0.5, gc_tol = 1e-5;
    gc.add("--seed", gc_seed, "first seed");
    gc.add("--seeds", gc_seeds, "number of seeds");
    gc.add("--dim", gc_dim, "input dimension");
    gc.add("--widths", gc_widths, "layer widths, comma separated, ending in 1");
    gc.add("--margin", gc_margin, "hinge margin");
    gc.add("--tolerance", gc_tol, "maximum accepted relative error");

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = expand_config(args);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kExitUsage;
    }

    auto run = [&](const Command& cmd, const std::string& name, const std::function<void(std::vector<std::string>)>& body) {
        Eigen::setNbThreads(cmd.threads());
        body(cmd.describe(name));
    };

    try {
        if (gen.app()->parsed()) {
            run(gen, "gen", [&](auto echo) {
                synth.mode = gen_mode == "continuous" ? DegradationMode::Continuous : DegradationMode::TwoLevel;
                synth.validate();
                save_dataset(generate(synth), gen_out, echo);
            });
        } else if (tr.app()->parsed()) {
            run(tr, "train", [&](auto echo) {
                tcfg.widths = parse_widths(tr_widths);
                tcfg.validate();
                const auto ds = load_dataset(tr_data);
                if (ds.empty()) throw DataError(tr_data + ": no records");
                auto proxy = tr_proxy;
                if (proxy == "auto") proxy = has_covariate_everywhere(ds, kDegradation) ? "degradation" : "none";
                std::vector<std::string> eligible;
                if (proxy == "none") {
                    eligible = ds.identities();
                } else {
                    std::vector<double> q;
                    if (proxy == "degradation") {
                        q = degradation_proxy(ds);
                    } else {
                        for (const auto& r : ds.records()) q.push_back(feature_norm_score(r.vector));
                    }
                    double threshold = 0.0;
                    if (tr_threshold == "midrange") {
                        const auto [lo, hi] = std::minmax_element(q.begin(), q.end());
                        threshold = 0.5 * (*lo + *hi);
                    } else if (tr_threshold == "median") {
                        threshold = median(q);
                    } else {
                        const auto v = csv::parse_double(tr_threshold);
                        if (!v) throw std::invalid_argument("proxy-threshold must be a number, 'midrange' or 'median'");
                        threshold = *v;
                    }
                    eligible = mixture_filter(ds, q, threshold, tr_band);
                    echo.push_back("resolved_proxy=" + proxy);
                    echo.push_back("resolved_proxy_threshold=" + csv::format_double(threshold));
                }
                echo.push_back("eligible_identities=" + std::to_string(eligible.size()));
                std::string log = csv::comment_block(echo) + "epoch,mean_loss\n";
                const auto result = train(ds, eligible, tcfg, [&](std::size_t epoch, double loss) {
                    log += std::to_string(epoch) + ',' + csv::format_double(loss) + '\n';
                });
                save_model({result.params, echo}, tr_model);
                if (!tr_log.empty()) csv::write_atomically(tr_log, log);
            });
        } else if (sc.app()->parsed()) {
            run(sc, "score", [&](auto echo) {
                const auto model = load_model(sc_model);
                const auto ds = load_dataset(sc_data, model.params.input_dim());
                csv::write_atomically(sc_out, format_scores(ds, score_all(model.params, ds), echo));
            });
        } else if (pv.app()->parsed()) {
            run(pv, "pool-verify", [&](auto echo) {
                const auto ds = load_dataset(pv_data);
                const auto method = pooling_method_from_string(pv_method);
                std::vector<double> scores;
                if (!pv_scores.empty()) {
                    scores = load_scores(pv_scores, ds);
                } else if (!pv_model.empty()) {
                    scores = score_all(load_model(pv_model).params, ds);
                } else if (method == PoolingMethod::Quality) {
                    throw std::invalid_argument("quality pooling needs --scores or --model");
                }
                const auto templates = load_templates(pv_templates, ds);
                const auto matches = load_matches(pv_matches);
                const auto scored = verify_protocol(templates, matches, method, ds, scores, pv_lambda);
                csv::write_atomically(pv_out, format_scored_matches(scored, echo));
            });
        } else if (er.app()->parsed()) {
            run(er, "eval-roc", [&](auto echo) {
                const auto targets = parse_doubles(er_targets, "fpr");
                std::vector<LabeledScore> labeled;
                for (const auto& s : load_scored_matches(er_in)) labeled.push_back({s.similarity, s.genuine});
                if (labeled.empty()) throw DataError(er_in + ": no matches");
                const auto curve = roc(labeled);
                std::vector<TprAtFpr> rows;
                for (double t : targets) rows.push_back(tpr_at_fpr(curve, t));
                csv::write_atomically(er_out, format_tpr_table(rows, echo));
                if (!er_roc.empty()) csv::write_atomically(er_roc, format_roc(curve, echo));
                for (const auto& r : rows) {
                    std::cout << "fpr<=" << csv::format_double(r.target) << " tpr=" << csv::format_double(r.tpr)
                              << (r.resolvable ? "" : " (unresolvable)") << '\n';
                }
            });
        } else if (ec.app()->parsed()) {
            run(ec, "eval-covariates", [&](auto echo) {
                const auto ds = load_dataset(ec_data);
                const auto all_scores = load_scores(ec_scores, ds);
                std::vector<double> cov, scores;
                for (std::size_t k = 0; k < ds.size(); ++k) {
                    auto it = ds[k].covariates.find(ec_cov);
                    if (it == ds[k].covariates.end() || std::isnan(all_scores[k])) continue;
                    cov.push_back(it->second);
                    scores.push_back(all_scores[k]);
                }
                if (cov.size() < 2) throw DataError("fewer than two records carry both a score and '" + ec_cov + "'");
                echo.push_back("records_used=" + std::to_string(cov.size()));
                std::string rho = "undefined";
                try {
                    rho = csv::format_double(spearman(cov, scores));
                } catch (const std::invalid_argument&) {
                }
                echo.push_back("spearman=" + rho);
                std::string out = csv::comment_block(echo);
                if (ec_levels) {
                    out += "level,count,mean,stddev";
                    for (std::size_t h = 0; h < ec_hist; ++h) out += ",h" + std::to_string(h);
                    out += '\n';
                    for (const auto& l : level_distributions(cov, scores, ec_hist)) {
                        out += csv::format_double(l.level) + ',' + std::to_string(l.count) + ',' +
                               csv::format_double(l.mean) + ',' + csv::format_double(l.stddev);
                        for (auto c : l.histogram) out += ',' + std::to_string(c);
                        out += '\n';
                    }
                } else {
                    out += "bin,lo,hi,count,mean_covariate,mean_score\n";
                    const auto b = covariate_bins(cov, scores, ec_bins);
                    for (std::size_t k = 0; k < b.bins.size(); ++k) {
                        const auto& x = b.bins[k];
                        out += std::to_string(k) + ',' + csv::format_double(x.lo) + ',' + csv::format_double(x.hi) +
                               ',' + std::to_string(x.count) + ',' + csv::format_double(x.mean_covariate) + ',' +
                               csv::format_double(x.mean_score) + '\n';
                    }
                }
                csv::write_atomically(ec_out, out);
                std::cout << "spearman=" << rho << '\n';
            });
        } else if (pr.app()->parsed()) {
            run(pr, "probe", [&](auto echo) {
                const auto ds = load_dataset(pr_data);
                const auto target = covariate_column(ds, pr_cov);
                const auto r = linear_probe(embedding_matrix(ds), target, pr_seed, pr_fraction, pr_ridge);
                std::string report = csv::comment_block(echo);
                report += "normalized_mae=" + csv::format_double(r.normalized_mae) + '\n';
                report += "mae=" + csv::format_double(r.mae) + '\n';
                report += "test_stddev=" + csv::format_double(r.test_stddev) + '\n';
                report += "n_train=" + std::to_string(r.n_train) + '\n';
                report += "n_test=" + std::to_string(r.n_test) + '\n';
                if (!pr_out.empty()) csv::write_atomically(pr_out, report);
                std::cout << report.substr(csv::comment_block(echo).size());
            });
        } else if (gc.app()->parsed()) {
            int status = kExitOk;
            run(gc, "grad-check", [&](auto) {
                const auto widths = parse_widths(gc_widths);
                double worst = 0.0;
                for (std::size_t k = 0; k < gc_seeds; ++k) {
                    const auto rep = grad_check_random(gc_seed + k, gc_dim, widths, gc_margin);
                    const double e = std::max(rep.max_relative_error, rep.input_max_relative_error);
                    std::cout << "seed=" << gc_seed + k << " checked=" << rep.checked
                              << " max_relative_error=" << e << '\n';
                    worst = std::max(worst, e);
                }
                std::cout << "max_relative_error=" << worst << (worst < gc_tol ? " ok" : " FAILED") << '\n';
                if (!(worst < gc_tol)) status = 1;
            });
            return status;
        }
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitOk;
}
