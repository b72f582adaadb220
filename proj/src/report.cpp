#include "sparselab/report.hpp"

#include "sparselab/analytics.hpp"
#include "sparselab/data_io.hpp"
#include "sparselab/error.hpp"

#include <glob.h>

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

namespace sparselab {

namespace fs = std::filesystem;

namespace {

constexpr std::pair<ReportKind, std::string_view> kKinds[] = {
    {ReportKind::accuracy, "accuracy"},       {ReportKind::jaccard, "jaccard"},
    {ReportKind::hamming, "hamming"},         {ReportKind::stability, "stability"},
    {ReportKind::structuredness, "structuredness"}, {ReportKind::ensemble, "ensemble"},
    {ReportKind::agreement, "agreement"},     {ReportKind::trajectories, "trajectories"},
    {ReportKind::quartile, "quartile"},
};

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string method_of(const RunRecord& r) { return std::string(method_name(r.config.prune.method)); }
std::string handling_of(const RunRecord& r) { return std::string(handling_name(r.config.handling)); }

std::string run_cols(const RunRecord& r) {
    return r.run_id + "," + method_of(r) + "," + handling_of(r) + "," + std::to_string(r.seed);
}

std::size_t common_iterations(const std::vector<const RunRecord*>& runs) {
    std::size_t n = static_cast<std::size_t>(-1);
    for (const auto* r : runs) {
        n = std::min(n, r->iterations.size());
    }
    return runs.empty() ? 0 : n;
}

std::size_t pick_iteration(const ReportOptions& opt, const std::vector<const RunRecord*>& runs) {
    const std::size_t common = common_iterations(runs);
    if (opt.iteration == 0) {
        if (common == 0) {
            throw SelectionError("selected runs share no finished iteration");
        }
        return common;
    }
    if (opt.iteration > common) {
        throw SelectionError("iteration " + std::to_string(opt.iteration) + " is not finished by every selected run");
    }
    return opt.iteration;
}

void require_same_arch(const std::vector<const RunRecord*>& runs) {
    for (const auto* r : runs) {
        if (r->config.architecture != runs.front()->config.architecture ||
            r->config.dataset != runs.front()->config.dataset) {
            throw SelectionError("runs " + runs.front()->run_id + " and " + r->run_id +
                                 " use different architectures or datasets");
        }
    }
}

const Dataset& test_set_for(const RunRecord& run, const ReportOptions& opt,
                            std::map<std::string, Dataset>& cache) {
    const fs::path root = opt.data_dir.empty() ? run.config.data_root() : fs::path(opt.data_dir);
    const std::string key = run.config.dataset + "|" + root.string();
    auto it = cache.find(key);
    if (it == cache.end()) {
        it = cache.emplace(key, load_dataset(run.config.dataset, root, false)).first;
    }
    return it->second;
}

// Runs grouped by seed, each group restricted to the requested methods.
std::map<std::uint64_t, std::vector<const RunRecord*>> member_groups(const std::vector<RunRecord>& runs,
                                                                     const ReportOptions& opt) {
    std::map<std::uint64_t, std::vector<const RunRecord*>> groups;
    for (const auto& r : runs) {
        const bool wanted = std::any_of(opt.methods.begin(), opt.methods.end(), [&](const std::string& m) {
            return m == method_of(r) || m == method_of(r) + "/" + handling_of(r);
        });
        if (opt.methods.empty() || wanted) {
            groups[r.seed].push_back(&r);
        }
    }
    if (groups.empty()) {
        throw SelectionError("no runs match the requested methods");
    }
    for (auto& [seed, g] : groups) {
        require_same_arch(g);
    }
    return groups;
}

std::string accuracy_report(const std::vector<RunRecord>& runs) {
    std::string out = "run_id,method,handling,seed,iteration,layer,explicit_fraction,effective_fraction,test_accuracy\n";
    for (const auto& r : runs) {
        for (const auto& it : r.iterations) {
            auto row = [&](const LayerSparsity& s) {
                out += run_cols(r) + "," + std::to_string(it.iteration) + "," + s.name + "," +
                       num(s.explicit_fraction()) + "," + num(s.effective_fraction()) + "," + num(it.test_accuracy) +
                       "\n";
            };
            for (const auto& l : it.sparsity.layers) {
                row(l);
            }
            row(it.sparsity.network);
        }
    }
    return out;
}

// Every layer's bits end to end, for the whole-network distance row.
Mask concatenated(const MaskSet& m) {
    Mask all{"all", {m.total()}, {}};
    all.bits.reserve(m.total());
    for (const auto& x : m.masks) {
        all.bits.insert(all.bits.end(), x.bits.begin(), x.bits.end());
    }
    return all;
}

std::string distance_report(const std::vector<RunRecord>& runs, const ReportOptions& opt, bool jaccard) {
    const auto slash = opt.reference.find('/');
    const std::string ref_method = opt.reference.substr(0, slash);
    const std::string ref_handling = slash == std::string::npos ? "" : opt.reference.substr(slash + 1);
    if (!parse_method(ref_method)) {
        throw SelectionError("unknown reference method '" + ref_method + "'");
    }
    auto is_ref = [&](const RunRecord& r) {
        return method_of(r) == ref_method && (ref_handling.empty() || handling_of(r) == ref_handling);
    };
    std::string out = std::string("reference,method,handling,seed,iteration,layer,") +
                      (jaccard ? "jaccard_distance" : "hamming_distance") + "\n";
    bool any = false;
    for (const auto& r : runs) {
        if (is_ref(r)) {
            continue;
        }
        const RunRecord* ref = nullptr;
        for (const auto& c : runs) {
            if (is_ref(c) && c.seed == r.seed && (!ref_handling.empty() || handling_of(c) == handling_of(r))) {
                ref = &c;
                break;
            }
        }
        if (ref == nullptr) {
            throw SelectionError("no reference run '" + opt.reference + "' with seed " + std::to_string(r.seed) +
                                 " for " + r.run_id);
        }
        require_same_arch({ref, &r});
        any = true;
        const std::size_t n = std::min(ref->iterations.size(), r.iterations.size());
        for (std::size_t k = 1; k <= n; ++k) {
            const MaskSet a = found_masks(*ref, k);
            const MaskSet b = found_masks(r, k);
            auto row = [&](const Mask& x, const Mask& y) {
                const double d = jaccard ? jaccard_distance(x, y) : hamming_distance(x, y);
                out += method_of(*ref) + "/" + handling_of(*ref) + "," + method_of(r) + "," + handling_of(r) + "," +
                       std::to_string(r.seed) + "," + std::to_string(k) + "," + x.name + "," + num(d) + "\n";
            };
            for (std::size_t l = 0; l < a.masks.size(); ++l) {
                row(a.masks[l], b.masks[l]);
            }
            row(concatenated(a), concatenated(b));
        }
    }
    if (!any) {
        throw SelectionError("no runs to compare against the reference");
    }
    return out;
}

std::string stability_report(const std::vector<RunRecord>& runs) {
    std::string out = "run_id,method,handling,seed,layer,stability,final_accuracy\n";
    for (const auto& r : runs) {
        if (r.iterations.size() < 2) {
            throw SelectionError(r.run_id + " has fewer than two finished iterations");
        }
        std::vector<Checkpoint> cks;
        for (std::size_t k = 1; k <= r.iterations.size(); ++k) {
            cks.push_back(trained_checkpoint(r, k));
        }
        double mean = 0.0;
        const std::size_t layers = cks.front().net.params.size();
        for (std::size_t l = 0; l < layers; ++l) {
            std::vector<Tensor> w;
            std::vector<Mask> m;
            for (const auto& ck : cks) {
                w.push_back(ck.net.params[l].weight);
                m.push_back(ck.masks.masks[l]);
            }
            const double s = stability_score(w, m);
            mean += s / static_cast<double>(layers);
            out += run_cols(r) + "," + cks.front().net.params[l].name + "," + num(s) + "," +
                   num(r.iterations.back().test_accuracy) + "\n";
        }
        out += run_cols(r) + ",mean," + num(mean) + "," + num(r.iterations.back().test_accuracy) + "\n";
    }
    return out;
}

std::string structuredness_report(const std::vector<RunRecord>& runs) {
    std::string out = "run_id,method,handling,seed,iteration,layer,slices,dead_fraction,random_expected\n";
    for (const auto& r : runs) {
        for (std::size_t k = 1; k <= r.iterations.size(); ++k) {
            const MaskSet ms = found_masks(r, k);
            for (const auto& m : ms.masks) {
                out += run_cols(r) + "," + std::to_string(k) + "," + m.name + "," + std::to_string(m.shape[1]) +
                       "," + num(structuredness(m)) + "," + num(random_structuredness(m)) + "\n";
            }
        }
    }
    return out;
}

std::string ensemble_report(const std::vector<RunRecord>& runs, const ReportOptions& opt, bool agreement) {
    const auto groups = member_groups(runs, opt);
    std::map<std::string, Dataset> cache;
    std::string out = agreement ? "seed,iteration,method" : "seed,iteration,members,best_member,best_accuracy,"
                                                            "ensemble_accuracy,gain\n";
    double sum_best = 0.0, sum_ens = 0.0;
    std::size_t last_iter = 0;
    bool header_done = false;
    for (const auto& [seed, members] : groups) {
        const std::size_t k = pick_iteration(opt, members);
        last_iter = k;
        const Dataset& test = test_set_for(*members.front(), opt, cache);
        std::vector<Tensor> probs;
        std::vector<std::vector<std::uint32_t>> preds;
        for (const auto* m : members) {
            probs.push_back(run_probabilities(*m, k, test));
            preds.push_back(argmax_rows(probs.back()));
        }
        if (agreement) {
            if (!header_done) {
                for (const auto* m : members) {
                    out += "," + method_of(*m) + "/" + handling_of(*m);
                }
                out += "\n";
                header_done = true;
            }
            const auto mat = agreement_matrix(preds);
            for (std::size_t p = 0; p < members.size(); ++p) {
                out += std::to_string(seed) + "," + std::to_string(k) + "," + method_of(*members[p]) + "/" +
                       handling_of(*members[p]);
                for (std::size_t q = 0; q < members.size(); ++q) {
                    out += "," + std::to_string(mat[p][q]);
                }
                out += "\n";
            }
            continue;
        }
        if (members.size() < 2) {
            throw SelectionError("seed " + std::to_string(seed) + " has fewer than two ensemble members");
        }
        std::string names;
        std::size_t best = 0;
        std::vector<double> accs;
        for (std::size_t i = 0; i < members.size(); ++i) {
            names += (i ? "+" : "") + method_of(*members[i]);
            accs.push_back(members[i]->iterations[k - 1].test_accuracy);
            if (accs[i] > accs[best]) {
                best = i;
            }
        }
        const EnsembleResult e = ensemble_average(probs, test.labels);
        sum_best += accs[best];
        sum_ens += e.accuracy;
        out += std::to_string(seed) + "," + std::to_string(k) + "," + names + "," + method_of(*members[best]) + "," +
               num(accs[best]) + "," + num(e.accuracy) + "," + num(e.accuracy - accs[best]) + "\n";
    }
    if (!agreement) {
        const double n = static_cast<double>(groups.size());
        out += "mean," + std::to_string(last_iter) + ",,," + num(sum_best / n) + "," + num(sum_ens / n) + "," +
               num((sum_ens - sum_best) / n) + "\n";
    }
    return out;
}

std::string trajectories_report(const std::vector<RunRecord>& runs, const ReportOptions& opt) {
    if (opt.layer.empty()) {
        throw SelectionError("trajectories report needs --layer");
    }
    std::string out = "run_id,method,handling,seed,iteration,layer,index,kept,value\n";
    for (const auto& r : runs) {
        for (std::size_t k = 1; k <= r.iterations.size(); ++k) {
            const Checkpoint ck = trained_checkpoint(r, k);
            const Tensor& w = ck.net.param(opt.layer).weight;
            const Mask& m = ck.masks.by_name(opt.layer);
            const std::string prefix = run_cols(r) + "," + std::to_string(k) + "," + opt.layer + ",";
            for (std::size_t j = 0; j < w.size(); ++j) {
                out += prefix + std::to_string(j) + "," + std::to_string(m.bits[j]) + "," + num(w[j]) + "\n";
            }
        }
    }
    return out;
}

std::string quartile_report(const std::vector<RunRecord>& runs) {
    std::string out = "run_id,method,handling,seed,iteration,layer,moved_fraction";
    for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
            out += ",q" + std::to_string(a) + "_to_q" + std::to_string(b);
        }
    }
    out += "\n";
    for (const auto& r : runs) {
        std::optional<Checkpoint> prev;
        for (std::size_t k = 1; k <= r.iterations.size(); ++k) {
            Checkpoint cur = trained_checkpoint(r, k);
            if (prev) {
                for (std::size_t l = 0; l < cur.net.params.size(); ++l) {
                    const Mask& m = cur.masks.masks[l];
                    if (m.kept() < 4) {
                        continue;
                    }
                    const auto q = quartile_movement(prev->net.params[l].weight, cur.net.params[l].weight, m);
                    out += run_cols(r) + "," + std::to_string(k) + "," + m.name + "," + num(q.fraction);
                    for (const auto& row : q.transitions) {
                        for (std::size_t c : row) {
                            out += "," + std::to_string(c);
                        }
                    }
                    out += "\n";
                }
            }
            prev = std::move(cur);
        }
    }
    return out;
}

} // namespace

std::string_view report_kind_name(ReportKind k) {
    for (const auto& [kind, name] : kKinds) {
        if (kind == k) {
            return name;
        }
    }
    return "?";
}

std::optional<ReportKind> parse_report_kind(std::string_view name) {
    for (const auto& [kind, n] : kKinds) {
        if (n == name) {
            return kind;
        }
    }
    return std::nullopt;
}

std::vector<RunRecord> select_runs(const std::vector<std::string>& globs) {
    std::set<std::string> dirs;
    for (const auto& pattern : globs) {
        glob_t g{};
        if (::glob(pattern.c_str(), 0, nullptr, &g) == 0) {
            for (std::size_t i = 0; i < g.gl_pathc; ++i) {
                if (is_run_dir(g.gl_pathv[i])) {
                    dirs.insert(g.gl_pathv[i]);
                }
            }
        }
        globfree(&g);
    }
    std::vector<RunRecord> runs;
    for (const auto& d : dirs) {
        runs.push_back(load_run(d));
    }
    if (runs.empty()) {
        throw SelectionError("no run directories match the given --runs patterns");
    }
    std::sort(runs.begin(), runs.end(), [](const RunRecord& a, const RunRecord& b) { return a.run_id < b.run_id; });
    return runs;
}

Checkpoint trained_checkpoint(const RunRecord& run, std::size_t iteration) {
    return load_checkpoint(iteration_dir(run.dir, iteration) / "final.ckpt");
}

MaskSet found_masks(const RunRecord& run, std::size_t iteration) {
    return load_masks(iteration_dir(run.dir, iteration) / "masks");
}

Tensor run_probabilities(const RunRecord& run, std::size_t iteration, const Dataset& test) {
    return softmax(predict_logits(trained_checkpoint(run, iteration).net, test));
}

std::string make_report(ReportKind kind, const ReportOptions& options) {
    const auto runs = select_runs(options.run_globs);
    switch (kind) {
    case ReportKind::accuracy:
        return accuracy_report(runs);
    case ReportKind::jaccard:
        return distance_report(runs, options, true);
    case ReportKind::hamming:
        return distance_report(runs, options, false);
    case ReportKind::stability:
        return stability_report(runs);
    case ReportKind::structuredness:
        return structuredness_report(runs);
    case ReportKind::ensemble:
        return ensemble_report(runs, options, false);
    case ReportKind::agreement:
        return ensemble_report(runs, options, true);
    case ReportKind::trajectories:
        return trajectories_report(runs, options);
    case ReportKind::quartile:
        return quartile_report(runs);
    }
    throw InputError("unknown report kind");
}

std::string inspect_mask_csv(const fs::path& run_dir, std::size_t iteration, const std::string& layer) {
    const Checkpoint ck = load_checkpoint(iteration_dir(run_dir, iteration) / "final.ckpt");
    const Tensor& w = ck.net.param(layer).weight;
    const Mask& m = ck.masks.by_name(layer);
    const std::size_t out_units = m.shape[0], slices = m.shape[1];
    const std::size_t inner = m.size() / (out_units * slices);
    std::string out = "out,in,offset,kept,value\n";
    for (std::size_t o = 0; o < out_units; ++o) {
        for (std::size_t c = 0; c < slices; ++c) {
            for (std::size_t j = 0; j < inner; ++j) {
                const std::size_t idx = (o * slices + c) * inner + j;
                out += std::to_string(o) + "," + std::to_string(c) + "," + std::to_string(j) + "," +
                       std::to_string(m.bits[idx]) + "," + num(w[idx]) + "\n";
            }
        }
    }
    return out;
}

} // namespace sparselab
