//! One child process per test case.
//!
//! The child runs in its own process group with address-space, CPU-time,
//! file-size and core-dump limits; on timeout the whole group is killed.

use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

use super::{EvalError, ExecutionLimits};

const CAPTURE_LIMIT: usize = 256 * 1024;
const FILE_SIZE_LIMIT: u64 = 64 * 1024 * 1024;

/// Interpreter used to run the driver: `program args... <driver-file>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Runtime {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl Default for Runtime {
    fn default() -> Self {
        Self {
            program: PathBuf::from("python3"),
            args: vec!["-I".into(), "-S".into()],
        }
    }
}

pub(crate) struct RawOutcome {
    pub timed_out: bool,
    pub status: Option<ExitStatus>,
    pub stdout: String,
    pub stderr: String,
    pub duration: Duration,
}

/// Reads a pipe to the end, keeping only the last `CAPTURE_LIMIT` bytes.
fn drain<R: Read + Send + 'static>(mut pipe: R) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            match pipe.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    kept.extend_from_slice(&buf[..n]);
                    if kept.len() > 2 * CAPTURE_LIMIT {
                        kept.drain(..kept.len() - CAPTURE_LIMIT);
                    }
                }
            }
        }
        if kept.len() > CAPTURE_LIMIT {
            kept.drain(..kept.len() - CAPTURE_LIMIT);
        }
        kept
    })
}

fn set_limit(resource: libc::__rlimit_resource_t, value: u64) -> std::io::Result<()> {
    let lim = libc::rlimit {
        rlim_cur: value as libc::rlim_t,
        rlim_max: value as libc::rlim_t,
    };
    // SAFETY: setrlimit only reads the struct we pass.
    if unsafe { libc::setrlimit(resource, &lim) } != 0 {
        return Err(std::io::Error::last_os_error());
    }
    Ok(())
}

pub(crate) fn run(
    runtime: &Runtime,
    dir: &Path,
    driver: &Path,
    input: &[u8],
    limits: &ExecutionLimits,
) -> Result<RawOutcome, EvalError> {
    let memory = limits.memory_cap;
    let cpu_seconds = limits.wall_time_per_case.as_secs_f64().ceil() as u64 + 1;
    let mut command = Command::new(&runtime.program);
    command
        .args(&runtime.args)
        .arg(driver)
        .current_dir(dir)
        .env_clear()
        .env("PATH", "/usr/bin:/bin")
        .env("HOME", dir)
        .env("TMPDIR", dir)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    // SAFETY: the closure runs between fork and exec and only makes
    // async-signal-safe system calls.
    unsafe {
        command.pre_exec(move || {
            if libc::setpgid(0, 0) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            set_limit(libc::RLIMIT_AS, memory)?;
            set_limit(libc::RLIMIT_CPU, cpu_seconds)?;
            set_limit(libc::RLIMIT_FSIZE, FILE_SIZE_LIMIT)?;
            set_limit(libc::RLIMIT_CORE, 0)?;
            Ok(())
        });
    }

    let start = Instant::now();
    let mut child = command
        .spawn()
        .map_err(|e| EvalError::Setup(format!("cannot start {}: {e}", runtime.program.display())))?;
    let pid = child.id() as libc::pid_t;

    let mut stdin = child.stdin.take().expect("stdin piped");
    let payload = input.to_vec();
    let writer = thread::spawn(move || {
        let _ = stdin.write_all(&payload);
    });
    let out = drain(child.stdout.take().expect("stdout piped"));
    let err = drain(child.stderr.take().expect("stderr piped"));

    let waited = child
        .wait_timeout(limits.wall_time_per_case)
        .map_err(|e| EvalError::Setup(format!("waiting on child: {e}")))?;
    let (timed_out, status) = match waited {
        Some(status) => (false, Some(status)),
        None => {
            // SAFETY: signalling the process group we created for the child.
            unsafe {
                libc::kill(-pid, libc::SIGKILL);
            }
            let _ = child.wait();
            (true, None)
        }
    };
    let duration = start.elapsed();
    // Anything left in the group (daemonized grandchildren) goes too.
    // SAFETY: as above.
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
    let _ = writer.join();
    let stdout = String::from_utf8_lossy(&out.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&err.join().unwrap_or_default()).into_owned();
    Ok(RawOutcome {
        timed_out,
        status,
        stdout,
        stderr,
        duration,
    })
}
