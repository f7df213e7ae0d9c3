#include "owd/report.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "owd/errors.hpp"
#include "owd/evaluation.hpp"
#include "owd/plot.hpp"
#include "owd/trainer.hpp"

namespace fs = std::filesystem;

namespace owd {

void write_comparison_report(const std::vector<std::string>& run_dirs,
                             const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir);

    struct Row {
        std::string name;
        RunManifest manifest;
        MetricReport report;
    };
    std::vector<Row> rows;
    for (const auto& dir : run_dirs) {
        Row row;
        row.name = fs::path(dir).filename().string();
        if (row.name.empty()) row.name = dir;
        row.manifest = RunManifest::load((fs::path(dir) / "manifest.json").string());
        row.report = MetricReport::from_json_file(row.manifest.metric_report_path);
        rows.push_back(std::move(row));
    }

    std::set<std::string> metric_keys;
    for (const auto& r : rows)
        for (const auto& [k, _] : r.report.values) metric_keys.insert(k);

    {
        std::ofstream csv(fs::path(out_dir) / "ablation_table.csv");
        std::ofstream md(fs::path(out_dir) / "ablation_table.md");
        csv << "run,seed,config_hash,refine,transfer";
        md << "| run | seed | refine | transfer |";
        for (const auto& k : metric_keys) {
            csv << "," << k;
            md << " " << k << " |";
        }
        csv << "\n";
        md << "\n|---|---|---|---|";
        for (std::size_t i = 0; i < metric_keys.size(); ++i) md << "---|";
        md << "\n";
        for (const auto& r : rows) {
            const auto refine = r.report.info.count("enable_refine")
                                    ? r.report.info.at("enable_refine")
                                    : "?";
            const auto transfer = r.report.info.count("enable_transfer")
                                      ? r.report.info.at("enable_transfer")
                                      : "?";
            csv << r.name << "," << r.manifest.seed << "," << r.manifest.config_hash << ","
                << refine << "," << transfer;
            md << "| " << r.name << " | " << r.manifest.seed << " | " << refine << " | "
               << transfer << " |";
            for (const auto& k : metric_keys) {
                csv << ",";
                md << " ";
                if (r.report.values.count(k)) {
                    csv << r.report.values.at(k);
                    md << r.report.values.at(k);
                } else {
                    md << "-";
                }
                md << " |";
            }
            csv << "\n";
            md << "\n";
        }
    }

    std::vector<PlotSeries> loss_series, urecall_series;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        PlotSeries ls, us;
        ls.name = us.name = rows[i].name;
        plot_color(static_cast<int>(i), ls.r, ls.g, ls.b);
        us.r = ls.r;
        us.g = ls.g;
        us.b = ls.b;
        for (const auto& e : rows[i].manifest.epochs) {
            ls.y.push_back(e.loss.total);
            us.y.push_back(e.val_urecall);
        }
        loss_series.push_back(std::move(ls));
        urecall_series.push_back(std::move(us));
    }
    render_line_plot(loss_series, (fs::path(out_dir) / "loss_curves.ppm").string());
    render_line_plot(urecall_series, (fs::path(out_dir) / "val_urecall.ppm").string());
}

}  // namespace owd
