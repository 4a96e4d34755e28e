"""EVM bytecode ingestion: disassembly, assembly, CFG recovery and value slicing."""
