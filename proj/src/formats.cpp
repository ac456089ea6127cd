#include "shopgraph/formats.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace shopgraph {
namespace {

struct Line {
    int number;
    std::vector<std::string_view> tokens;
};

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

std::vector<Line> content_lines(std::string_view text) {
    std::vector<Line> out;
    int number = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        ++number;
        auto tokens = split_ws(raw);
        if (!tokens.empty() && tokens.front().front() != '#') out.push_back({number, std::move(tokens)});
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    return out;
}

long long to_int(std::string_view tok, int line, const char* what) {
    long long value = 0;
    const auto* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, value);
    if (ec != std::errc() || ptr != end)
        throw ParseError("line " + std::to_string(line) + ": expected integer " + what + ", got '" +
                             std::string(tok) + "'",
                         line);
    return value;
}

bool is_number(std::string_view tok) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    return ec == std::errc() && ptr == tok.data() + tok.size();
}

}  // namespace

Instance parse_jssp(std::string_view text, std::string name) {
    const auto lines = content_lines(text);
    if (lines.empty()) throw ParseError("empty job-shop input", 0);
    const auto& head = lines.front();
    if (head.tokens.size() != 2)
        throw ParseError("line " + std::to_string(head.number) + ": expected \"n m\"", head.number);
    const auto n = to_int(head.tokens[0], head.number, "job count");
    const auto m = to_int(head.tokens[1], head.number, "machine count");
    if (n < 0 || m <= 0)
        throw ParseError("line " + std::to_string(head.number) + ": invalid job/machine counts", head.number);
    if (static_cast<long long>(lines.size()) - 1 != n)
        throw ParseError("expected " + std::to_string(n) + " job lines, found " + std::to_string(lines.size() - 1),
                         lines.back().number);

    std::vector<Job> jobs;
    for (long long j = 0; j < n; ++j) {
        const auto& line = lines[static_cast<std::size_t>(j + 1)];
        if (static_cast<long long>(line.tokens.size()) != 2 * m)
            throw ParseError("line " + std::to_string(line.number) + ": expected " + std::to_string(2 * m) +
                                 " values, found " + std::to_string(line.tokens.size()),
                             line.number);
        Job job;
        for (long long k = 0; k < m; ++k) {
            const auto machine = to_int(line.tokens[static_cast<std::size_t>(2 * k)], line.number, "machine");
            const auto time = to_int(line.tokens[static_cast<std::size_t>(2 * k + 1)], line.number, "time");
            if (machine < 0 || machine >= m)
                throw ParseError("line " + std::to_string(line.number) + ": machine index " +
                                     std::to_string(machine) + " out of range [0," + std::to_string(m) + ")",
                                 line.number);
            if (time <= 0)
                throw ParseError("line " + std::to_string(line.number) + ": non-positive processing time",
                                 line.number);
            job.operations.push_back(Operation{{Option{static_cast<int>(machine), time}}});
        }
        jobs.push_back(std::move(job));
    }
    return Instance(std::move(name), static_cast<int>(m), std::move(jobs));
}

Instance parse_fjssp(std::string_view text, std::string name) {
    const auto lines = content_lines(text);
    if (lines.empty()) throw ParseError("empty flexible job-shop input", 0);
    const auto& head = lines.front();
    if (head.tokens.size() < 2 || head.tokens.size() > 3 || (head.tokens.size() == 3 && !is_number(head.tokens[2])))
        throw ParseError("line " + std::to_string(head.number) + ": expected \"n p [avg]\"", head.number);
    const auto n = to_int(head.tokens[0], head.number, "job count");
    const auto p = to_int(head.tokens[1], head.number, "machine count");
    if (n < 0 || p < 0)
        throw ParseError("line " + std::to_string(head.number) + ": negative counts", head.number);
    if (static_cast<long long>(lines.size()) - 1 != n)
        throw ParseError("expected " + std::to_string(n) + " job lines, found " + std::to_string(lines.size() - 1),
                         lines.back().number);

    std::vector<Job> jobs;
    for (long long j = 0; j < n; ++j) {
        const auto& line = lines[static_cast<std::size_t>(j + 1)];
        const auto job_tag = "job " + std::to_string(j + 1) + " (line " + std::to_string(line.number) + ")";
        std::size_t pos = 0;
        auto next = [&](const char* what) {
            if (pos >= line.tokens.size())
                throw ParseError(job_tag + ": line ends early, missing " + what, line.number);
            return to_int(line.tokens[pos++], line.number, what);
        };
        Job job;
        const auto k_ops = next("operation count");
        if (k_ops <= 0) throw ParseError(job_tag + ": operation count must be positive", line.number);
        for (long long k = 0; k < k_ops; ++k) {
            const auto k_mach = next("machine count");
            if (k_mach <= 0) throw ParseError(job_tag + ": operation without machines", line.number);
            Operation op;
            for (long long q = 0; q < k_mach; ++q) {
                const auto machine = next("machine");
                const auto time = next("time");
                if (machine < 1 || machine > p)
                    throw ParseError(job_tag + ": machine " + std::to_string(machine) + " out of range [1," +
                                         std::to_string(p) + "]",
                                     line.number);
                if (time <= 0) throw ParseError(job_tag + ": non-positive processing time", line.number);
                op.options.push_back({static_cast<int>(machine - 1), time});
            }
            job.operations.push_back(std::move(op));
        }
        if (pos != line.tokens.size())
            throw ParseError(job_tag + ": " + std::to_string(line.tokens.size() - pos) + " unexpected trailing values",
                             line.number);
        jobs.push_back(std::move(job));
    }
    try {
        return Instance(std::move(name), static_cast<int>(p), std::move(jobs));
    } catch (const InstanceError& e) {
        throw ParseError(e.what(), 0);
    }
}

std::string serialize_fjssp(const Instance& instance) {
    std::ostringstream out;
    out << instance.num_jobs() << ' ' << instance.num_machines() << '\n';
    for (const auto& job : instance.jobs()) {
        out << job.operations.size();
        for (const auto& op : job.operations) {
            out << ' ' << op.options.size();
            for (const auto& o : op.options) out << ' ' << (o.machine + 1) << ' ' << o.duration;
        }
        out << '\n';
    }
    return out.str();
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Instance load_instance(const std::filesystem::path& path) {
    const auto text = read_text_file(path);
    const auto name = path.stem().string();
    if (path.extension() == ".fjs") return parse_fjssp(text, name);
    try {
        return parse_fjssp(text, name);
    } catch (const ParseError&) {
        return parse_jssp(text, name);
    }
}

std::string schedule_to_json(const Instance& instance, const Schedule& schedule) {
    nlohmann::json j;
    j["instance"] = instance.name();
    j["makespan"] = makespan(schedule);
    auto& list = j["assignments"] = nlohmann::json::array();
    for (const auto& [op, a] : schedule)
        list.push_back({{"job", op.job}, {"op", op.index}, {"machine", a.machine}, {"start", a.start}, {"end", a.end}});
    return j.dump(2) + "\n";
}

Schedule schedule_from_json(std::string_view text) {
    Schedule s;
    try {
        const auto j = nlohmann::json::parse(text);
        for (const auto& a : j.at("assignments"))
            s.assign({a.at("job").get<int>(), a.at("op").get<int>()},
                     {a.at("machine").get<int>(), a.at("start").get<Time>(), a.at("end").get<Time>()});
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("schedule JSON: ") + e.what(), 0);
    }
    return s;
}

}  // namespace shopgraph
