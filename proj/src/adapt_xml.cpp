#include <cctype>
#include <map>
#include <sstream>

#include "flowguard/mape.hpp"

// Reader and writer for the adaptation configuration files.  The format is a
// fixed two-level XML shape, so this is a purpose-built scanner rather than a
// general XML parser.

namespace flowguard::mape {

namespace {

class Scanner {
public:
    explicit Scanner(const std::string& text) : text_(text) {}

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
    }

    bool done() {
        skip_ws();
        return pos_ >= text_.size();
    }

    bool peek(const std::string& token) {
        skip_ws();
        return text_.compare(pos_, token.size(), token) == 0;
    }

    void expect(const std::string& token) {
        skip_ws();
        if (text_.compare(pos_, token.size(), token) != 0)
            throw ConfigError("expected '" + token + "' at offset " +
                              std::to_string(pos_));
        pos_ += token.size();
    }

    std::string name() {
        skip_ws();
        size_t begin = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                text_[pos_] == '-' || text_[pos_] == '_'))
            ++pos_;
        if (pos_ == begin)
            throw ConfigError("expected a name at offset " + std::to_string(begin));
        return text_.substr(begin, pos_ - begin);
    }

    // Attribute list up to (but not consuming) "/>" or ">".
    std::map<std::string, std::string> attributes() {
        std::map<std::string, std::string> attrs;
        while (true) {
            skip_ws();
            if (pos_ >= text_.size())
                throw ConfigError("unterminated element");
            if (text_[pos_] == '>' || text_[pos_] == '/') return attrs;
            std::string key = name();
            expect("=");
            expect("\"");
            std::string value;
            while (pos_ < text_.size() && text_[pos_] != '"') {
                if (text_[pos_] == '&') {
                    value += entity();
                } else if (text_[pos_] == '<') {
                    throw ConfigError("raw '<' in attribute value");
                } else {
                    value += text_[pos_++];
                }
            }
            if (pos_ >= text_.size())
                throw ConfigError("unterminated attribute value");
            ++pos_;  // closing quote
            if (attrs.count(key))
                throw ConfigError("duplicate attribute '" + key + "'");
            attrs[key] = value;
        }
    }

    void skip_declaration() {
        if (peek("<?")) {
            size_t end = text_.find("?>", pos_);
            if (end == std::string::npos)
                throw ConfigError("unterminated declaration");
            pos_ = end + 2;
        }
    }

private:
    char entity() {
        size_t end = text_.find(';', pos_);
        if (end == std::string::npos)
            throw ConfigError("unterminated entity");
        std::string ent = text_.substr(pos_, end - pos_ + 1);
        pos_ = end + 1;
        if (ent == "&amp;") return '&';
        if (ent == "&lt;") return '<';
        if (ent == "&gt;") return '>';
        if (ent == "&quot;") return '"';
        if (ent == "&apos;") return '\'';
        throw ConfigError("unknown entity '" + ent + "'");
    }

    const std::string& text_;
    size_t pos_ = 0;
};

const char* kNodeKeys[] = {"id", "name", "kind", "address"};
const char* kSubNodeKeys[] = {"id", "name", "launch_file_path", "address", "kind"};

template <size_t N>
void check_keys(const std::map<std::string, std::string>& attrs,
                const char* (&allowed)[N], const std::string& element) {
    for (const auto& [key, value] : attrs) {
        (void)value;
        bool known = false;
        for (const char* a : allowed)
            if (key == a) known = true;
        if (!known)
            throw ConfigError("unknown attribute '" + key + "' on <" + element +
                              ">");
    }
    for (const char* a : allowed)
        if (!attrs.count(a))
            throw ConfigError("<" + element + "> missing attribute '" + a + "'");
}

int parse_id(const std::string& value, const std::string& element) {
    if (value.empty())
        throw ConfigError("<" + element + "> id is empty");
    for (char c : value)
        if (!std::isdigit(static_cast<unsigned char>(c)))
            throw ConfigError("<" + element + "> id '" + value +
                              "' is not a number");
    try {
        return std::stoi(value);
    } catch (const std::exception&) {
        throw ConfigError("<" + element + "> id '" + value + "' out of range");
    }
}

std::string escaped(const std::string& value) {
    std::string out;
    for (char c : value) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

AdaptationConfig parse_adaptation_config(const std::string& text) {
    Scanner scan(text);
    scan.skip_declaration();

    scan.expect("<");
    std::string root = scan.name();
    if (root != "node")
        throw ConfigError("expected <node> root element, got <" + root + ">");
    auto attrs = scan.attributes();
    check_keys(attrs, kNodeKeys, "node");

    AdaptationConfig config;
    config.main.id = parse_id(attrs["id"], "node");
    config.main.name = attrs["name"];
    config.main.partition_kind = attrs["kind"];
    config.main.address = attrs["address"];
    if (config.main.id != 0)
        throw ConfigError("main node id must be 0, got " +
                          std::to_string(config.main.id));
    if (config.main.name.empty())
        throw ConfigError("main node name is empty");

    bool self_closed = scan.peek("/");
    if (self_closed) {
        scan.expect("/");
        scan.expect(">");
    } else {
        scan.expect(">");
        while (!scan.peek("</")) {
            scan.expect("<");
            std::string child = scan.name();
            if (child != "sub-node")
                throw ConfigError("unexpected element <" + child +
                                  "> inside <node>");
            auto sub_attrs = scan.attributes();
            check_keys(sub_attrs, kSubNodeKeys, "sub-node");

            AdaptationSubNode sub;
            sub.id = parse_id(sub_attrs["id"], "sub-node");
            sub.name = sub_attrs["name"];
            sub.launch_file_path = sub_attrs["launch_file_path"];
            sub.address = sub_attrs["address"];
            sub.partition_kind = sub_attrs["kind"];
            int expected = static_cast<int>(config.backups.size()) + 1;
            if (sub.id != expected)
                throw ConfigError("sub-node id " + std::to_string(sub.id) +
                                  " out of order, expected " +
                                  std::to_string(expected));
            if (sub.name.empty())
                throw ConfigError("sub-node " + std::to_string(sub.id) +
                                  " name is empty");
            config.backups.push_back(sub);

            if (scan.peek("/")) {
                scan.expect("/");
                scan.expect(">");
            } else {
                scan.expect(">");
                scan.expect("</");
                std::string closer = scan.name();
                if (closer != "sub-node")
                    throw ConfigError("mismatched closing tag </" + closer + ">");
                scan.expect(">");
            }
        }
        scan.expect("</");
        std::string closer = scan.name();
        if (closer != "node")
            throw ConfigError("mismatched closing tag </" + closer + ">");
        scan.expect(">");
    }

    if (!scan.done())
        throw ConfigError("trailing content after </node>");
    return config;
}

std::string render_adaptation_config(const AdaptationConfig& config) {
    std::ostringstream out;
    out << "<node id=\"" << config.main.id << "\" name=\""
        << escaped(config.main.name) << "\" kind=\""
        << escaped(config.main.partition_kind) << "\" address=\""
        << escaped(config.main.address) << "\"";
    if (config.backups.empty()) {
        out << "/>\n";
        return out.str();
    }
    out << ">\n";
    for (const auto& sub : config.backups) {
        out << "  <sub-node id=\"" << sub.id << "\" name=\"" << escaped(sub.name)
            << "\" launch_file_path=\"" << escaped(sub.launch_file_path)
            << "\" address=\"" << escaped(sub.address) << "\" kind=\""
            << escaped(sub.partition_kind) << "\"/>\n";
    }
    out << "</node>\n";
    return out.str();
}

}  // namespace flowguard::mape
