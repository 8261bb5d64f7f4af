//! Minimal Language Server Protocol client for call graph extraction.

mod extract;
pub mod framing;
mod session;

pub use extract::{
    extract_call_edges, extract_graph, extract_symbols, parse_document_symbols, CallExtraction, ExtractError,
    Extraction, ExtractionReport, Position, Range, SymbolRecord, SYMBOL_CLASS, SYMBOL_CONSTRUCTOR, SYMBOL_FUNCTION,
    SYMBOL_METHOD,
};
pub use session::{path_to_uri, start_session, uri_to_path, LspError, LspServerConfig, Session};
