import os


def load_config(path):
    """Load a key-value configuration file and resolve references."""
    text = read_file(path)
    entries = parse_lines(text)
    resolved = {}
    for key, value in entries.items():
        resolved[normalize_key(key)] = expand_value(value, entries, 0)
    validate_config(resolved)
    return resolved


def read_file(path):
    """Read a text file from disk."""
    with open(path) as handle:
        return handle.read()


def parse_lines(text):
    """Split configuration text into a dict of raw entries."""
    entries = {}
    for line in text.splitlines():
        pair = parse_line(strip_comment(line))
        if pair:
            entries[pair[0]] = pair[1]
    return entries


def parse_line(line):
    """Parse one key=value line into a pair."""
    if "=" not in line:
        return None
    key, value = line.split("=", 1)
    return key.strip(), value.strip()


def strip_comment(line):
    """Remove a trailing hash comment from a line."""
    return line.split("#", 1)[0]


def expand_value(value, entries, depth):
    """Expand ${name} references inside a configuration value."""
    if depth > 8 or "${" not in value:
        return value
    start = value.index("${")
    end = value.index("}", start)
    name = value[start + 2:end]
    replacement = resolve_reference(name, entries, depth)
    return value[:start] + replacement + value[end + 1:]


def resolve_reference(name, entries, depth):
    """Look up a referenced entry, falling back to the environment."""
    if name in entries:
        return expand_value(entries[name], entries, depth + 1)
    return os.environ.get(name, "")


def validate_config(config):
    """Check that every required key is present."""
    missing = [key for key in required_keys() if key not in config]
    if missing:
        raise ValueError("missing keys: " + ", ".join(missing))


def required_keys():
    """Return the configuration keys every run needs."""
    return ["input", "output"]


def normalize_key(key):
    """Lowercase a key and replace dashes with underscores."""
    return key.lower().replace("-", "_")
