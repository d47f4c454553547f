#include "bcdet/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "bcdet/config.hpp"

namespace bcdet {

using nlohmann::json;
namespace fs = std::filesystem;

FormatError::FormatError(const std::string& source, std::int64_t offset, const std::string& what)
    : std::runtime_error(source + (offset >= 0 ? " @ byte " + std::to_string(offset) : std::string()) + ": " + what),
      offset_(offset) {}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

class ByteReader {
public:
    ByteReader(std::string_view bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
        pos_ += 4;
        return v;
    }

    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

    std::string_view take(std::size_t n, const char* what) {
        need(n, what);
        const std::string_view s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void expect_end() const {
        if (pos_ != bytes_.size())
            throw FormatError(source_, static_cast<std::int64_t>(pos_),
                              std::to_string(bytes_.size() - pos_) + " trailing bytes after payload");
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError(source_, static_cast<std::int64_t>(pos_), what);
    }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n)
            throw FormatError(source_, static_cast<std::int64_t>(pos_),
                              std::string("truncated while reading ") + what + " (need " + std::to_string(n) +
                                  " bytes, have " + std::to_string(bytes_.size() - pos_) + ")");
    }

    std::string_view bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

constexpr std::string_view kPyramidMagic = "FPY1";
constexpr std::string_view kCheckpointMagic = "BCKP";
constexpr std::uint32_t kCheckpointVersion = 1;

json parse_json(std::string_view text, const std::string& source) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(source, static_cast<std::int64_t>(e.byte), e.what());
    }
}

}  // namespace

// --- pyramids ------------------------------------------------------------

std::string encode_pyramid(const FeaturePyramid<double>& pyramid) {
    std::string out(kPyramidMagic);
    put_u32(out, static_cast<std::uint32_t>(pyramid.levels.size()));
    for (const auto& l : pyramid.levels) {
        put_u32(out, static_cast<std::uint32_t>(l.cols()));
        put_u32(out, static_cast<std::uint32_t>(l.rows()));
    }
    for (const auto& l : pyramid.levels)
        for (Eigen::Index t = 0; t < l.cols(); ++t)
            for (Eigen::Index d = 0; d < l.rows(); ++d) put_f32(out, l(d, t));
    return out;
}

FeaturePyramid<double> decode_pyramid(std::string_view bytes, int scale_factor, const std::string& source) {
    ByteReader r(bytes, source);
    if (r.take(std::min<std::size_t>(4, bytes.size()), "magic") != kPyramidMagic)
        throw FormatError(source, 0, "bad magic, expected FPY1");
    const std::uint32_t levels = r.u32("level count");
    std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes;
    std::uint64_t expected = 0;
    for (std::uint32_t l = 0; l < levels; ++l) {
        const std::uint32_t len = r.u32("level length");
        const std::uint32_t dim = r.u32("level dim");
        shapes.emplace_back(len, dim);
        expected += static_cast<std::uint64_t>(len) * dim * 4u;
    }
    if (expected != r.remaining())
        r.fail("payload is " + std::to_string(r.remaining()) + " bytes but header implies " + std::to_string(expected));

    FeaturePyramid<double> p;
    p.scale_factor = scale_factor;
    for (const auto& [len, dim] : shapes) {
        if (!p.levels.empty() && static_cast<Eigen::Index>(dim) != p.levels.front().rows())
            r.fail("levels disagree on feature dimension");
        Eigen::MatrixXd m(dim, len);
        for (std::uint32_t t = 0; t < len; ++t)
            for (std::uint32_t d = 0; d < dim; ++d) m(d, t) = r.f32("payload");
        p.levels.push_back(std::move(m));
    }
    r.expect_end();
    return p;
}

void write_pyramid(const fs::path& path, const FeaturePyramid<double>& pyramid) {
    write_file_atomic(path, encode_pyramid(pyramid));
}

FeaturePyramid<double> read_pyramid(const fs::path& path, int scale_factor) {
    return decode_pyramid(read_file(path), scale_factor, path.string());
}

// --- annotations ---------------------------------------------------------

json annotations_to_json(const AnnotationSet& set) {
    json videos = json::array();
    for (const auto& v : set.videos) {
        json segs = json::array();
        for (const auto& s : v.segments) {
            json e{{"start_seconds", s.interval.start}, {"end_seconds", s.interval.end}};
            if (s.label.compound()) {
                e["verb"] = s.label.primary;
                e["noun"] = s.label.secondary;
            } else {
                e["label"] = s.label.primary;
            }
            segs.push_back(std::move(e));
        }
        videos.push_back({{"id", v.id},
                          {"duration_seconds", v.duration_seconds},
                          {"frame_rate", v.frame_rate},
                          {"segments", std::move(segs)}});
    }
    json j = label_space_to_json(set.labels);
    j["version"] = kAnnotationVersion;
    j["videos"] = std::move(videos);
    return j;
}

AnnotationSet annotations_from_json(const json& j, const std::string& source) {
    AnnotationSet set;
    try {
        if (j.value("version", "") != kAnnotationVersion)
            throw FormatError(source, -1, "unsupported annotation version '" + j.value("version", "") + "'");
        set.labels = label_space_from_json(j);
        for (const auto& jv : j.at("videos")) {
            VideoAnnotation v;
            v.id = jv.at("id").get<std::string>();
            v.duration_seconds = jv.at("duration_seconds").get<double>();
            v.frame_rate = jv.at("frame_rate").get<double>();
            if (!(v.frame_rate > 0.0)) throw FormatError(source, -1, "video " + v.id + ": frame_rate must be positive");
            for (const auto& js : jv.at("segments")) {
                AnnotatedSegment s;
                s.interval = {js.at("start_seconds").get<double>(), js.at("end_seconds").get<double>()};
                if (js.contains("label"))
                    s.label = {js.at("label").get<int>(), -1};
                else
                    s.label = {js.at("verb").get<int>(), js.at("noun").get<int>()};
                if (!(s.interval.end > s.interval.start) || s.interval.start < 0.0 ||
                    s.interval.end > v.duration_seconds + 1e-9)
                    throw FormatError(source, -1, "video " + v.id + ": segment outside [0, duration] or empty");
                try {
                    set.labels.check(s.label);
                } catch (const std::out_of_range& e) {
                    throw FormatError(source, -1, "video " + v.id + ": " + e.what());
                }
                v.segments.push_back(s);
            }
            set.videos.push_back(std::move(v));
        }
    } catch (const json::exception& e) {
        throw FormatError(source, -1, e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(source, -1, e.what());
    }
    return set;
}

void write_annotations(const fs::path& path, const AnnotationSet& set) {
    write_file_atomic(path, annotations_to_json(set).dump(2) + "\n");
}

AnnotationSet read_annotations(const fs::path& path) {
    const std::string text = read_file(path);
    return annotations_from_json(parse_json(text, path.string()), path.string());
}

std::vector<GroundTruthSegment> segments_in_frames(const VideoAnnotation& video) {
    std::vector<GroundTruthSegment> out;
    for (const auto& s : video.segments) {
        const Interval iv{s.interval.start * video.frame_rate, s.interval.end * video.frame_rate};
        out.push_back(s.label.compound() ? GroundTruthSegment::verb_noun(iv, s.label.primary, s.label.secondary)
                                         : GroundTruthSegment::single(iv, s.label.primary));
    }
    return out;
}

std::vector<GroundTruth> ground_truths(const AnnotationSet& set) {
    std::vector<GroundTruth> out;
    for (const auto& v : set.videos)
        for (const auto& s : v.segments) out.push_back({v.id, s.interval, s.label});
    return out;
}

AnnotationSet annotations_of(const SynthDataset& ds) {
    AnnotationSet set;
    set.labels = ds.labels;
    for (const auto& seq : ds.sequences) {
        VideoAnnotation v;
        v.id = seq.id;
        v.frame_rate = ds.frame_rate;
        v.duration_seconds = seq.length / ds.frame_rate;
        for (const auto& s : seq.segments)
            v.segments.push_back({{s.interval.start / ds.frame_rate, s.interval.end / ds.frame_rate}, s.label()});
        set.videos.push_back(std::move(v));
    }
    return set;
}

fs::path annotation_path(const fs::path& dir) { return dir / "annotations.json"; }
fs::path feature_path(const fs::path& dir, const std::string& video_id) { return dir / "features" / (video_id + ".fpy"); }

void write_dataset(const fs::path& dir, const SynthDataset& ds) {
    for (const auto& seq : ds.sequences) write_pyramid(feature_path(dir, seq.id), seq.features);
    write_annotations(annotation_path(dir), annotations_of(ds));
}

// --- detections ----------------------------------------------------------

json detections_to_json(const DetectionMap& detections) {
    json results = json::object();
    for (const auto& [video, props] : detections) {
        json list = json::array();
        for (const auto& p : props) {
            json e{{"start_seconds", p.interval.start}, {"end_seconds", p.interval.end}, {"score", p.score}};
            if (p.label.compound()) {
                e["verb"] = p.label.primary;
                e["noun"] = p.label.secondary;
            } else {
                e["label"] = p.label.primary;
            }
            list.push_back(std::move(e));
        }
        results[video] = std::move(list);
    }
    return {{"version", kDetectionVersion}, {"results", std::move(results)}};
}

std::vector<Detection> detections_from_json(const json& j, const std::string& source) {
    std::vector<Detection> out;
    try {
        if (j.value("version", "") != kDetectionVersion)
            throw FormatError(source, -1, "unsupported detection version '" + j.value("version", "") + "'");
        for (const auto& [video, list] : j.at("results").items()) {
            for (const auto& e : list) {
                Detection d;
                d.video_id = video;
                d.interval = {e.at("start_seconds").get<double>(), e.at("end_seconds").get<double>()};
                d.score = e.at("score").get<double>();
                if (e.contains("label"))
                    d.label = {e.at("label").get<int>(), -1};
                else
                    d.label = {e.at("verb").get<int>(), e.at("noun").get<int>()};
                if (!d.interval.valid()) throw FormatError(source, -1, "video " + video + ": detection with end < start");
                out.push_back(d);
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(source, -1, e.what());
    }
    return out;
}

void write_detections(const fs::path& path, const DetectionMap& detections) {
    write_file_atomic(path, detections_to_json(detections).dump(1) + "\n");
}

std::vector<Detection> read_detections(const fs::path& path) {
    const std::string text = read_file(path);
    return detections_from_json(parse_json(text, path.string()), path.string());
}

// --- checkpoints -----------------------------------------------------------

std::string encode_checkpoint(const HeadWeights<double>& w) {
    std::string out(kCheckpointMagic);
    put_u32(out, kCheckpointVersion);
    const std::string cfg = head_config_to_json(w.config).dump();
    put_u32(out, static_cast<std::uint32_t>(cfg.size()));
    out += cfg;
    std::uint32_t count = 0;
    w.params.for_each([&](std::string_view, const MatrixX<double>&) { ++count; });
    put_u32(out, count);
    w.params.for_each([&](std::string_view name, const MatrixX<double>& m) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_u32(out, static_cast<std::uint32_t>(m.rows()));
        put_u32(out, static_cast<std::uint32_t>(m.cols()));
    });
    w.params.for_each([&](std::string_view, const MatrixX<double>& m) {
        for (Eigen::Index k = 0; k < m.size(); ++k) put_f32(out, m.data()[k]);
    });
    return out;
}

HeadWeights<double> decode_checkpoint(std::string_view bytes, const std::string& source) {
    ByteReader r(bytes, source);
    if (r.take(std::min<std::size_t>(4, bytes.size()), "magic") != kCheckpointMagic)
        throw FormatError(source, 0, "bad magic, expected BCKP");
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t cfg_len = r.u32("config length");
    const std::size_t cfg_at = r.pos();
    const std::string_view cfg_text = r.take(cfg_len, "config");
    HeadConfig cfg;
    try {
        cfg = head_config_from_json(json::parse(cfg_text));
        cfg.validate();
    } catch (const std::exception& e) {
        throw FormatError(source, static_cast<std::int64_t>(cfg_at), std::string("bad head config: ") + e.what());
    }
    HeadWeights<double> w(cfg);

    std::vector<std::pair<std::string, MatrixX<double>*>> expected;
    w.params.for_each([&](std::string_view name, MatrixX<double>& m) { expected.emplace_back(std::string(name), &m); });
    const std::uint32_t count = r.u32("tensor count");
    if (count != expected.size())
        r.fail("expected " + std::to_string(expected.size()) + " tensors, header lists " + std::to_string(count));
    for (const auto& [name, m] : expected) {
        const std::uint32_t len = r.u32("tensor name length");
        const std::string_view got = r.take(len, "tensor name");
        if (got != name) r.fail("expected tensor '" + name + "', found '" + std::string(got) + "'");
        const std::uint32_t rows = r.u32("rows");
        const std::uint32_t cols = r.u32("cols");
        if (rows != m->rows() || cols != m->cols())
            r.fail("tensor '" + name + "' has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                   ", config implies " + std::to_string(m->rows()) + "x" + std::to_string(m->cols()));
    }
    std::uint64_t payload = 0;
    for (const auto& [name, m] : expected) payload += static_cast<std::uint64_t>(m->size()) * 4u;
    if (payload != r.remaining())
        r.fail("payload is " + std::to_string(r.remaining()) + " bytes but header implies " + std::to_string(payload));
    for (const auto& [name, m] : expected)
        for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = r.f32("payload");
    r.expect_end();
    return w;
}

void write_checkpoint(const fs::path& path, const HeadWeights<double>& w) { write_file_atomic(path, encode_checkpoint(w)); }

HeadWeights<double> read_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path), path.string()); }

// --- reports -----------------------------------------------------------------

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

namespace {

std::string label_name(const ActionLabel& l) {
    if (l.compound()) return std::to_string(l.primary) + ":" + std::to_string(l.secondary);
    return std::to_string(l.primary);
}

std::string threshold_name(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", t);
    return buf;
}

}  // namespace

std::string trace_csv(const std::vector<LossBreakdown>& trace) {
    std::string out = "step,l_cls,l_giou,l_conf_s,l_conf_e,total\n";
    char buf[256];
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto& t = trace[i];
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g\n", i + 1, t.l_cls, t.l_giou, t.l_conf_s,
                      t.l_conf_e, t.total);
        out += buf;
    }
    return out;
}

json report_to_json(const EvalReport& report) {
    json per_threshold = json::object();
    for (std::size_t i = 0; i < report.thresholds.size(); ++i) per_threshold[threshold_name(report.thresholds[i])] = report.map[i];
    json per_class = json::object();
    for (const auto& [label, row] : report.per_class_ap) per_class[label_name(label)] = row;
    json j{{"thresholds", report.thresholds},
           {"map", per_threshold},
           {"average_map", report.average_map},
           {"per_class_ap", per_class}};
    if (!report.curves.budgets.empty())
        j["boundary_error_curves"] = {{"budgets_seconds", report.curves.budgets},
                                      {"start_fraction", report.curves.start_fraction},
                                      {"end_fraction", report.curves.end_fraction}};
    if (!report.length_groups.empty()) {
        json groups = json::array();
        for (const auto& g : report.length_groups)
            groups.push_back({{"group", g.name}, {"average_map", g.average_map}, {"num_gt", g.num_gt}});
        j["length_groups"] = std::move(groups);
    }
    return j;
}

std::string map_table_csv(const std::vector<std::pair<std::string, EvalReport>>& rows) {
    if (rows.empty()) return {};
    std::string out = "name";
    for (double t : rows.front().second.thresholds) out += "," + threshold_name(t);
    out += ",Avg.\n";
    for (const auto& [name, report] : rows) {
        out += name;
        for (double m : report.map) out += "," + format_number(m);
        out += "," + format_number(report.average_map) + "\n";
    }
    return out;
}

std::string per_class_csv(const EvalReport& report) {
    std::string out = "class";
    for (double t : report.thresholds) out += "," + threshold_name(t);
    out += "\n";
    for (const auto& [label, row] : report.per_class_ap) {
        out += label_name(label);
        for (double ap : row) out += "," + format_number(ap);
        out += "\n";
    }
    return out;
}

std::string curves_csv(const BoundaryErrorCurves& curves) {
    std::string out = "budget_seconds,start_fraction,end_fraction\n";
    for (std::size_t i = 0; i < curves.budgets.size(); ++i)
        out += format_number(curves.budgets[i]) + "," + format_number(curves.start_fraction[i]) + "," +
               format_number(curves.end_fraction[i]) + "\n";
    return out;
}

std::string length_groups_csv(const std::vector<GroupScore>& groups) {
    std::string out = "group,num_gt,average_map\n";
    for (const auto& g : groups) out += g.name + "," + std::to_string(g.num_gt) + "," + format_number(g.average_map) + "\n";
    return out;
}

std::string curves_svg(const BoundaryErrorCurves& curves, const std::string& provenance) {
    constexpr double W = 640, H = 420, left = 60, right = 20, top = 30, bottom = 50;
    const double pw = W - left - right, ph = H - top - bottom;
    const double xmax = curves.budgets.empty() ? 1.0 : std::max(curves.budgets.back(), 1e-9);
    const auto px = [&](double x) { return left + pw * x / xmax; };
    const auto py = [&](double y) { return top + ph * (1.0 - y); };
    char buf[256];
    std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    std::snprintf(buf, sizeof buf, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" viewBox=\"0 0 %g %g\">\n",
                  W, H, W, H);
    out += buf;
    std::string prov = provenance;
    for (std::size_t p = prov.find("--"); p != std::string::npos; p = prov.find("--")) prov.replace(p, 2, "- -");
    out += "<!-- provenance: " + prov + " -->\n";
    out += "<!-- data (budget_seconds,start_fraction,end_fraction):\n" + curves_csv(curves) + "-->\n";
    out += "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf, "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n", left,
                  top, pw, ph);
    out += buf;
    for (int k = 0; k <= 4; ++k) {
        const double y = k / 4.0;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%g\" y=\"%g\" font-size=\"11\" text-anchor=\"end\">%.2f</text>\n", left - 6, py(y) + 4, y);
        out += buf;
    }
    for (int k = 0; k <= 4; ++k) {
        const double x = xmax * k / 4.0;
        std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" font-size=\"11\" text-anchor=\"middle\">%.2f</text>\n", px(x),
                      top + ph + 16, x);
        out += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" font-size=\"12\" text-anchor=\"middle\">boundary error budget x (s)</text>\n",
                  left + pw / 2, H - 12);
    out += buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"14\" y=\"%g\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 %g)\">"
                  "fraction correctly detected</text>\n",
                  top + ph / 2, top + ph / 2);
    out += buf;

    const auto polyline = [&](const std::vector<double>& ys, const char* color, const char* name, double legend_y) {
        std::string pts;
        for (std::size_t i = 0; i < ys.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", px(curves.budgets[i]), py(ys[i]));
            pts += buf;
        }
        out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"%s\" stroke-width=\"2\"/>"
                      "<text x=\"%g\" y=\"%g\" font-size=\"12\">%s</text>\n",
                      left + pw - 110, legend_y, left + pw - 85, legend_y, color, left + pw - 80, legend_y + 4, name);
        out += buf;
    };
    polyline(curves.start_fraction, "#1f77b4", "start", top + ph - 40);
    polyline(curves.end_fraction, "#d62728", "end", top + ph - 20);
    out += "</svg>\n";
    return out;
}

}  // namespace bcdet
