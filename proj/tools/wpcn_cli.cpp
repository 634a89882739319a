// Command-line front-end: dataset generation, solving, training,
// distillation, architecture search, and the benchmark report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "wpcn/distill.hpp"
#include "wpcn/evaluate.hpp"
#include "wpcn/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << content;
}

void write_curves_csv(const std::string& path, const std::vector<double>& train,
                      const std::vector<double>& val) {
    std::ostringstream out;
    out << "epoch,train_loss,val_loss\n";
    out.precision(12);
    for (std::size_t e = 0; e < train.size(); ++e)
        out << e << ',' << train[e] << ',' << val[e] << '\n';
    write_file(path, out.str());
}

struct DataBundle {
    std::vector<wpcn::DatasetSample> train, val, test;
    wpcn::DatasetMeta meta;
};

DataBundle load_bundle(const std::string& prefix, bool need_train = true) {
    DataBundle b;
    b.meta = wpcn::load_meta(prefix + ".meta.json");
    if (need_train) b.train = wpcn::load_samples(prefix + ".train.jsonl");
    b.val = wpcn::load_samples(prefix + ".val.jsonl");
    b.test = wpcn::load_samples(prefix + ".test.jsonl");
    return b;
}

wpcn::ArchSpec arch_by_name(const std::string& name, int n, int k) {
    if (name == "sc-net") return wpcn::make_sc_net(n, k);
    if (name == "skin-net") return wpcn::make_skin_net(n, k);
    if (name == "rel-net") return wpcn::make_rel_net(n, k);
    if (name == "mini") return wpcn::make_student(n, k);
    throw CLI::ValidationError("--arch", "unknown architecture " + name);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Relay selection and minimum-length scheduling toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::uint64_t seed = 7;
    std::string out_dir = ".";
    bool json_out = false;
    app.add_option("--seed", seed, "master seed")->capture_default_str();
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_flag("--json", json_out, "prefer JSON console output");

    // gen-data ---------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "generate a labeled dataset");
    int gn = 3, gk = 2, gtrain = 20000, gval = 2000, gtest = 1000;
    std::string gname = "dataset";
    gen->add_option("--n", gn, "sources")->capture_default_str();
    gen->add_option("--k", gk, "relays")->capture_default_str();
    gen->add_option("--train", gtrain, "train split size")->capture_default_str();
    gen->add_option("--val", gval, "validation split size")->capture_default_str();
    gen->add_option("--test", gtest, "test split size")->capture_default_str();
    gen->add_option("--name", gname, "dataset file prefix")->capture_default_str();

    // solve ------------------------------------------------------------
    auto* solve = app.add_subcommand("solve", "solve one instance");
    std::string method = "bba", instance_path;
    int sn = 3, sk = 2;
    solve->add_option("--method", method, "bba|enumerate|or|criterion|direct")
        ->capture_default_str();
    solve->add_option("--n", sn, "sources (sampled instance)")->capture_default_str();
    solve->add_option("--k", sk, "relays (sampled instance)")->capture_default_str();
    solve->add_option("--instance", instance_path, "instance JSON file");

    // train ------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "train a classifier");
    std::string arch_name = "sc-net", data_prefix = "dataset", model_out;
    wpcn::TrainConfig tcfg;
    train_cmd->add_option("--arch", arch_name, "sc-net|skin-net|rel-net|mini")
        ->capture_default_str();
    train_cmd->add_option("--data", data_prefix, "dataset prefix")->capture_default_str();
    train_cmd->add_option("--epochs", tcfg.epochs)->capture_default_str();
    train_cmd->add_option("--lr", tcfg.learning_rate)->capture_default_str();
    train_cmd->add_option("--batch", tcfg.batch_size)->capture_default_str();
    train_cmd->add_option("--model-out", model_out, "model file path");

    // distill ----------------------------------------------------------
    auto* distill_cmd = app.add_subcommand("distill", "teacher-student training");
    std::string teacher_path, student_out;
    double lambda1 = 0.5, lambda2 = 0.5, temperature = 1.0;
    int distill_epochs = 20;
    distill_cmd->add_option("--teacher", teacher_path, "teacher model file")->required();
    distill_cmd->add_option("--data", data_prefix, "dataset prefix");
    distill_cmd->add_option("--lambda1", lambda1)->capture_default_str();
    distill_cmd->add_option("--lambda2", lambda2)->capture_default_str();
    distill_cmd->add_option("--temperature", temperature)->capture_default_str();
    distill_cmd->add_option("--epochs", distill_epochs)->capture_default_str();
    distill_cmd->add_option("--model-out", student_out, "student model path");

    // search -----------------------------------------------------------
    auto* search_cmd = app.add_subcommand("search", "student architecture search");
    wpcn::SearchConfig scfg;
    std::string menu_csv = "64,32,24,16,8,2,0";
    search_cmd->add_option("--teacher", teacher_path, "teacher model file")->required();
    search_cmd->add_option("--data", data_prefix, "dataset prefix");
    search_cmd->add_option("--vth", scfg.v_threshold, "validation CE gate")
        ->capture_default_str();
    search_cmd->add_option("--eps", scfg.eps_params, "interval stop")
        ->capture_default_str();
    search_cmd->add_option("--menu", menu_csv, "node menu")->capture_default_str();
    search_cmd->add_option("--epochs", scfg.train.epochs, "inner training epochs")
        ->capture_default_str();

    // evaluate ---------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("evaluate", "benchmark report");
    std::vector<std::string> model_args;
    eval_cmd->add_option("--data", data_prefix, "dataset prefix");
    eval_cmd->add_option("--model", model_args, "name=path (repeatable)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        fs::create_directories(out_dir);
        const std::string out_prefix = out_dir + "/";

        if (*gen) {
            if (gn < 1) throw std::invalid_argument("--n must be at least 1");
            wpcn::GenerateConfig cfg;
            cfg.n = gn;
            cfg.k = gk;
            cfg.sizes = {gtrain, gval, gtest};
            cfg.seed = seed;
            const wpcn::DatasetMeta meta =
                wpcn::generate_dataset(cfg, out_prefix + gname);
            std::cout << "wrote " << out_prefix << gname << ".{train,val,test}.jsonl ("
                      << meta.sizes.train << "/" << meta.sizes.val << "/"
                      << meta.sizes.test << "), input " << meta.rows << "x4, seed "
                      << meta.seed << "\n";
        } else if (*solve) {
            wpcn::NetworkInstance inst;
            if (!instance_path.empty()) {
                inst = wpcn::load_instance(instance_path);
            } else {
                if (sn < 1) throw std::invalid_argument("--n must be at least 1");
                inst = wpcn::sample_instance(sn, sk, {}, {}, {}, seed);
            }
            wpcn::SelectionResult res;
            if (method == "bba") {
                res = wpcn::branch_and_bound(inst);
            } else if (method == "enumerate") {
                res = wpcn::enumerate_optimal(inst);
            } else {
                wpcn::Assignment a;
                if (method == "or")
                    a = wpcn::or_select(inst);
                else if (method == "criterion")
                    a = wpcn::criterion_select(inst);
                else if (method == "direct")
                    a = wpcn::all_direct(inst);
                else
                    throw CLI::ValidationError("--method", "unknown method " + method);
                res.assignment = a;
                res.schedule =
                    wpcn::optimal_schedule(wpcn::expand_assignment(inst, a), inst.sys);
                res.nodes_explored = 1;
            }
            json out = wpcn::selection_to_json(res);
            out["residuals"] =
                wpcn::residuals_to_json(wpcn::verify_schedule(inst, res.assignment,
                                                              res.schedule));
            std::cout << out.dump(2) << "\n";
        } else if (*train_cmd) {
            const DataBundle b = load_bundle(data_prefix);
            const wpcn::ArchSpec arch = arch_by_name(arch_name, b.meta.n, b.meta.k);
            tcfg.seed = seed;
            const wpcn::TrainData data{&b.train, &b.val, &b.meta};
            const wpcn::TrainResult res = wpcn::train(arch, data, tcfg);
            const std::string model_path =
                model_out.empty() ? out_prefix + arch_name + ".model.json" : model_out;
            wpcn::save_model(res.model, model_path);
            write_curves_csv(out_prefix + arch_name + ".curves.csv", res.train_loss,
                             res.val_loss);
            std::cout << "trained " << arch_name << " ("
                      << wpcn::param_count(arch) << " params), final val CE "
                      << res.val_loss.back() << ", model " << model_path << "\n";
        } else if (*distill_cmd) {
            const DataBundle b = load_bundle(data_prefix);
            const wpcn::Model teacher = wpcn::load_model(teacher_path);
            wpcn::TrainConfig cfg = wpcn::default_distill_config();
            cfg.lambda1 = lambda1;
            cfg.lambda2 = lambda2;
            cfg.temperature = temperature;
            cfg.epochs = distill_epochs;
            cfg.seed = seed;
            const wpcn::ArchSpec student = wpcn::make_student(b.meta.n, b.meta.k);
            const wpcn::TrainData data{&b.train, &b.val, &b.meta};
            const wpcn::DistillResult res = wpcn::distill_train(teacher, student, data, cfg);
            const std::string model_path =
                student_out.empty() ? out_prefix + "stu-sc-net.model.json" : student_out;
            wpcn::save_model(res.model, model_path);
            write_curves_csv(out_prefix + "stu-sc-net.curves.csv", res.train_loss,
                             res.val_loss);
            std::cout << "distilled student (" << wpcn::param_count(student)
                      << " params), final val CE " << res.final_val_ce << ", model "
                      << model_path << "\n";
        } else if (*search_cmd) {
            const DataBundle b = load_bundle(data_prefix);
            const wpcn::Model teacher = wpcn::load_model(teacher_path);
            scfg.node_menu.clear();
            std::stringstream menu(menu_csv);
            for (std::string tok; std::getline(menu, tok, ',');)
                scfg.node_menu.push_back(std::stoi(tok));
            scfg.train.seed = seed;
            const wpcn::TrainData data{&b.train, &b.val, &b.meta};
            const wpcn::SearchResult res = wpcn::search_student_arch(teacher, data, scfg);
            wpcn::save_model(res.model, out_prefix + "searched-student.model.json");
            write_file(out_prefix + "search-trace.json", wpcn::trace_to_json(res.trace));
            std::cout << "search done: " << res.trace.records.size() << " iterations, "
                      << "student " << wpcn::param_count(res.model.arch)
                      << " params (teacher " << res.trace.teacher_params
                      << "), met threshold: "
                      << (res.trace.met_threshold ? "yes" : "no") << "\n";
        } else if (*eval_cmd) {
            const DataBundle b = load_bundle(data_prefix, false);
            std::vector<wpcn::NamedModel> models;
            for (const auto& arg : model_args) {
                const auto pos = arg.find('=');
                if (pos == std::string::npos)
                    throw CLI::ValidationError("--model", "expected name=path");
                models.push_back(
                    {arg.substr(0, pos), wpcn::load_model(arg.substr(pos + 1))});
            }
            wpcn::GenerateConfig gcfg;
            gcfg.n = b.meta.n;
            gcfg.k = b.meta.k;
            gcfg.sizes = b.meta.sizes;
            gcfg.seed = b.meta.seed;
            const wpcn::EvalReport report = evaluate_methods(gcfg, b.test, models);
            write_file(out_prefix + "eval-report.csv", wpcn::report_to_csv(report));
            write_file(out_prefix + "eval-report.json", wpcn::report_to_json(report));
            std::cout << wpcn::report_to_csv(report);
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
