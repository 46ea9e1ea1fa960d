use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::thread::sleep;
use std::time::Duration;

const BIN: &str = env!("CARGO_BIN_EXE_crowdsense");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn blur_compute_golden() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pgm");
    let b = dir.path().join("b.pgm");
    std::fs::write(&a, "P2\n2 2\n255\n10 0\n0 0\n").unwrap();
    std::fs::write(&b, "P2\n2 2\n255\n6 2\n2 2\n").unwrap();
    let o = run(&["blur", "compute", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("blurriness 0.6\n"), "{}", stdout(&o));

    std::fs::write(&b, "P2\n2 2\n255\n6 2\n2\n").unwrap();
    let o = run(&["blur", "compute", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["nope"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["-s", "bogus=1", "client", "show", "--state", "x"]).status.code(), Some(1));
}

struct Killed(Child);

impl Drop for Killed {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn wait_for(addr: &str) {
    for _ in 0..100 {
        if std::net::TcpStream::connect(addr).is_ok() {
            return;
        }
        sleep(Duration::from_millis(50));
    }
    panic!("server at {addr} never came up");
}

fn client(conf: &Path, args: &[&str]) -> Output {
    let mut full = vec!["-c", conf.to_str().unwrap(), "client"];
    full.extend_from_slice(args);
    run(&full)
}

#[test]
fn server_and_client_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let addr = format!("127.0.0.1:{}", free_port());
    let conf = dir.path().join("c.conf");
    std::fs::write(
        &conf,
        format!(
            "group_bits = 64\nkey_bits = 512\nnn_bits = 16\nepsilon = 0\nslot_length = 1\nlisten = {addr}\n\
             key_file = {}\n",
            dir.path().join("server.key").display()
        ),
    )
    .unwrap();
    let _server = Killed(
        Command::new(BIN)
            .args(["-c", conf.to_str().unwrap(), "server", "run"])
            .stdout(Stdio::null())
            .spawn()
            .unwrap(),
    );
    wait_for(&addr);
    let state = dir.path().join("u.state");
    let st = state.to_str().unwrap();

    assert!(client(&conf, &["register", "--state", st]).status.success());
    assert_eq!(client(&conf, &["register", "--state", st]).status.code(), Some(1));
    assert_eq!(client(&conf, &["inquire", "--state", st, "--space", "A"]).status.code(), Some(1));

    let slot = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap().as_secs().to_string();
    let submit = ["submit", "--state", st, "--space", "A", "--available", "1", "--slot", slot.as_str()];
    let first = client(&conf, &submit);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let dup = client(&conf, &submit);
    assert_eq!(dup.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&dup.stderr).contains("duplicate"));

    // the window around the slot closes two slots later
    sleep(Duration::from_millis(3200));
    let claim = client(&conf, &["claim", "--state", st, "--space", "A", "--slot", slot.as_str()]);
    assert!(claim.status.success(), "{}", String::from_utf8_lossy(&claim.stderr));
    assert!(stdout(&claim).contains("balance 1"));
    let again = client(&conf, &["claim", "--state", st, "--space", "A", "--slot", slot.as_str()]);
    assert_eq!(again.status.code(), Some(1), "ticket already used locally");

    let inq = client(&conf, &["inquire", "--state", st, "--space", "A", "--space", "B"]);
    assert!(inq.status.success());
    assert!(stdout(&inq).ends_with("balance 0\n"));

    let off = client(&conf, &["submit", "--state", st, "--space", "A", "--available", "0", "--server", "127.0.0.1:1"]);
    assert_eq!(off.status.code(), Some(3));
}
