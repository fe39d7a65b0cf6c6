use std::io::{self, Read, Write};
use std::os::unix::process::CommandExt;
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use ccts_core::tasks::parse_solution;
use ccts_core::{TaskConfig, TaskSolution};

use crate::{ExecutionLimits, LlmError};

const STDERR_CAP: usize = 64 * 1024;

/// Captured output of a finished program.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramOutput {
    pub stdout: String,
    pub stderr: String,
    pub elapsed: Duration,
}

fn read_capped(mut source: impl Read, cap: usize) -> Vec<u8> {
    let mut kept = Vec::new();
    let _ = source.by_ref().take(cap as u64).read_to_end(&mut kept);
    let _ = io::copy(&mut source, &mut io::sink());
    kept
}

fn kill_group(child: &mut Child) {
    // the child leads its own process group, so this also reaches grandchildren
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
    let _ = child.kill();
}

/// Runs `program` through the interpreter under the wall-time and address-space limits.
pub fn run_program(program: &str, limits: &ExecutionLimits) -> Result<ProgramOutput, LlmError> {
    limits.validate()?;
    let memory_bytes = limits.memory_mb.saturating_mul(1024 * 1024) as libc::rlim_t;
    let mut command = Command::new(&limits.interpreter[0]);
    command
        .args(&limits.interpreter[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    unsafe {
        command.pre_exec(move || {
            if libc::setpgid(0, 0) != 0 {
                return Err(io::Error::last_os_error());
            }
            let limit = libc::rlimit { rlim_cur: memory_bytes, rlim_max: memory_bytes };
            if libc::setrlimit(libc::RLIMIT_AS, &limit) != 0 {
                return Err(io::Error::last_os_error());
            }
            Ok(())
        });
    }
    let start = Instant::now();
    let mut child = command.spawn().map_err(|e| LlmError::Spawn(e.to_string()))?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let source = program.to_string();
    let writer = thread::spawn(move || {
        let _ = stdin.write_all(source.as_bytes());
    });
    let stdout = child.stdout.take().expect("piped stdout");
    let cap = limits.stdout_cap_bytes;
    let out_reader = thread::spawn(move || read_capped(stdout, cap));
    let stderr = child.stderr.take().expect("piped stderr");
    let err_reader = thread::spawn(move || read_capped(stderr, STDERR_CAP));

    let deadline = Duration::from_secs_f64(limits.wall_time_s);
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if start.elapsed() >= deadline => {
                kill_group(&mut child);
                let _ = child.wait();
                break None;
            }
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                kill_group(&mut child);
                let _ = child.wait();
                return Err(LlmError::Spawn(e.to_string()));
            }
        }
    };
    let elapsed = start.elapsed();
    // stray grandchildren may still hold the pipes open
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
    let _ = writer.join();
    let stdout = String::from_utf8_lossy(&out_reader.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&err_reader.join().unwrap_or_default()).into_owned();
    match status {
        None => Err(LlmError::Timeout { seconds: limits.wall_time_s, stderr }),
        Some(s) if !s.success() => Err(LlmError::NonzeroExit { code: s.code(), stderr }),
        Some(_) => Ok(ProgramOutput { stdout, stderr, elapsed }),
    }
}

/// Runs a candidate and parses what it prints as a solution document.
pub fn execute_candidate(
    program: &str,
    limits: &ExecutionLimits,
    task: &TaskConfig,
) -> Result<TaskSolution, LlmError> {
    let output = run_program(program, limits)?;
    parse_solution(task, output.stdout.trim()).map_err(|e| LlmError::ParseFailure {
        message: e.to_string(),
        stderr: output.stderr,
    })
}
