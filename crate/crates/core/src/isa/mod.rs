//! TinyASM: a small assembler-like language, the dump-file model and a
//! concrete interpreter.
//!
//! The language has fourteen opcodes. `SETX` stands for a value assigned
//! outside the analysed segment; `ADD`/`SUB`/`MUL`/`SHL`/`SHR` form the
//! "adjust" family; `LOAD`, `STORE` and `PRINT` dereference memory and are
//! the only instructions that can fault.

mod dump;
mod interp;
pub(crate) mod program;

pub use dump::{
    parse_dump, DumpError, DumpSnapshot, Fault, Legality, MemoryBlock, MemoryMap, MemoryMapError, ProtectKey,
    ValidationError,
};
pub use interp::{execute, ExecError, Externals, Outcome, Step, Trace, DEFAULT_STEP_LIMIT};
pub use program::{
    parse_program, AdjustOp, BranchCond, Instruction, Op, Opcode, Operand, ParseError, ParseReason, Program, WriteKind,
};
