from config import normalize_key


class ReportWriter:
    """Collects rows and writes them as an aligned text table."""

    def __init__(self, columns):
        self.columns = [normalize_key(c) for c in columns]
        self.rows = []

    def add_row(self, record):
        """Append a record, keeping only known columns."""
        self.rows.append([format_cell(record.get(c, "")) for c in self.columns])

    def render(self):
        """Render the header and all rows as text."""
        widths = column_widths(self.columns, self.rows)
        lines = [format_row(self.columns, widths)]
        lines.extend(format_row(row, widths) for row in self.rows)
        return "\n".join(lines)


def build_report(records, columns):
    """Build a text report from records with the given columns."""
    writer = ReportWriter(columns)
    for record in records:
        writer.add_row(record)
    return writer.render() + "\n" + summarize_totals(records)


def format_cell(value):
    """Convert a value to display text."""
    if isinstance(value, float):
        return "%.2f" % value
    return str(value)


def column_widths(columns, rows):
    """Compute the display width of every column."""
    widths = [len(c) for c in columns]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
    return widths


def format_row(cells, widths):
    """Pad each cell to its column width and join them."""
    return " | ".join(pad_cell(cell, width) for cell, width in zip(cells, widths))


def pad_cell(cell, width):
    """Right-pad a cell with spaces."""
    return cell + " " * (width - len(cell))


def summarize_totals(records):
    """Sum numeric fields across all records."""
    totals = {}
    for record in records:
        for key, value in record.items():
            if isinstance(value, (int, float)):
                totals[normalize_key(key)] = totals.get(normalize_key(key), 0) + value
    return ", ".join("%s=%s" % (k, format_cell(v)) for k, v in sorted(totals.items()))
