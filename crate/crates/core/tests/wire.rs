mod common;

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

use common::{clients, config, rng, server};
use crowdsense::credential::Signature;
use crowdsense::net::{respond, Metrics, NetServer, TcpTransport};
use crowdsense::protocol::{Client, ClientError, Reason, Request, Response, Stage, Status, Transport};
use crowdsense::wire::{
    decode_request, decode_response, encode_request, encode_response, read_frame, write_frame,
    FrameError, Value, WireError, WireMessage, MAX_FRAME,
};

fn request_round_trip(pp: &crowdsense::group::GroupParams, req: &Request) {
    let msg = encode_request(Some(pp), req).unwrap();
    let text = msg.encode();
    let back = WireMessage::decode(&text).unwrap();
    assert_eq!(back, msg);
    assert_eq!(back.encode(), text);
    assert_eq!(&decode_request(Some(pp), &back).unwrap(), req);
}

fn response_round_trip(pp: &crowdsense::group::GroupParams, stage: Stage, resp: &Response) {
    let msg = encode_response(Some(pp), stage, resp).unwrap();
    let back = WireMessage::decode(&msg.encode()).unwrap();
    assert_eq!(&decode_response(Some(pp), stage, &back).unwrap(), resp);
}

#[test]
fn every_message_round_trips() {
    let srv = server(config());
    let pp = srv.params().clone();
    let mut r = rng(11);
    let mut cs = clients(&srv, 3, &mut r);

    request_round_trip(&pp, &Request::Setup);
    let (_, reg) = crowdsense::protocol::Registration::begin(srv.bundle(), &mut r).unwrap();
    request_round_trip(&pp, &reg);

    for c in cs.iter_mut() {
        let sub = c.submission_request("lot-7", 0, true, &mut r).unwrap();
        request_round_trip(&pp, &sub);
        assert!(matches!(srv.handle(sub), Response::Accepted));
    }
    srv.aggregate("lot-7", 0);
    let open = cs[0].claim_open_request("lot-7", 0, &mut r).unwrap();
    request_round_trip(&pp, &open);
    let session = vec![9u8; 16];
    for inquiry in [false, true] {
        request_round_trip(&pp, &cs[0].reveal_request(&session, inquiry));
        request_round_trip(&pp, &cs[0].refresh_request(&session, inquiry, &mut r).0);
    }
    cs[0].claim(&mut &srv, "lot-7", 0, &mut r).unwrap();
    let inq = cs[0]
        .inquiry_open_request(&["lot-7".to_string(), "A".to_string()], &mut r)
        .unwrap();
    request_round_trip(&pp, &inq);
    let Request::InquireOpen { proof_nn, .. } = &inq else { unreachable!() };
    assert_eq!(proof_nn.bit_commitments.len(), 16);

    let sig = Signature(vec![1, 2, 3]);
    let replies = [
        (Stage::Setup, Response::Setup(Box::new(srv.bundle()))),
        (Stage::Register, Response::Registered { s_double_prime: pp.scalar(5), sig: sig.clone() }),
        (Stage::Submit, Response::Accepted),
        (Stage::ClaimOpen, Response::ClaimOffer { session: session.clone(), credit: 3 }),
        (Stage::ClaimReveal, Response::Revealed),
        (Stage::ClaimRefresh, Response::Refreshed { sig: sig.clone() }),
        (Stage::InquireOpen, Response::InquiryOpened { session: session.clone() }),
        (Stage::InquireReveal, Response::Revealed),
        (
            Stage::InquireRefresh,
            Response::InquiryResult {
                statuses: vec![Status::Occupied, Status::Available, Status::Unconfirmed],
                sig,
            },
        ),
    ];
    for (stage, resp) in &replies {
        response_round_trip(&pp, *stage, resp);
    }
    for stage in Stage::ALL {
        for reason in Reason::ALL {
            response_round_trip(&pp, stage, &Response::Rejected(reason));
        }
    }
}

#[test]
fn typed_decoding_is_strict() {
    let srv = server(config());
    let pp = srv.params().clone();
    let mut r = rng(12);
    let mut c = clients(&srv, 1, &mut r).remove(0);
    let sub = encode_request(Some(&pp), &c.submission_request("A", 0, true, &mut r).unwrap()).unwrap();

    let mut extra = sub.clone();
    extra.body.insert("zz".into(), Value::Dec(0));
    assert_eq!(decode_request(Some(&pp), &extra), Err(WireError::UnknownField("zz".into())));

    let mut missing = sub.clone();
    missing.body.remove("ticket");
    assert_eq!(decode_request(Some(&pp), &missing), Err(WireError::MissingField("ticket")));

    let mut vote = sub.clone();
    vote.body.insert("a".into(), Value::Dec(2));
    assert!(decode_request(Some(&pp), &vote).is_err());

    let mut short = sub.clone();
    short.body.insert("ticket".into(), Value::Hex(vec![1]));
    assert!(decode_request(Some(&pp), &short).is_err());

    let mut session = sub.clone();
    session.session = vec![1];
    assert!(decode_request(Some(&pp), &session).is_err());

    assert_eq!(decode_request(None, &sub), Err(WireError::NoParams));

    // a well-framed message with a bad body is answered, not dropped
    let (stage, reply) = respond(&srv, &missing.encode()).unwrap();
    assert_eq!(stage, Stage::Submit);
    let msg = WireMessage::decode(&reply).unwrap();
    assert_eq!(
        decode_response(Some(&pp), Stage::Submit, &msg).unwrap(),
        Response::Rejected(Reason::Malformed)
    );
    assert!(respond(&srv, b"not a message").is_none());
}

fn start(srv: crowdsense::protocol::Server) -> (Arc<crowdsense::protocol::Server>, Arc<Metrics>, NetServer) {
    let srv = Arc::new(srv);
    let metrics = Arc::new(Metrics::new());
    let net = NetServer::start(srv.clone(), "127.0.0.1:0", metrics.clone(), None).unwrap();
    (srv, metrics, net)
}

#[test]
fn loopback_happy_path() {
    let (srv, server_metrics, net) = start(server(config()));
    let client_metrics = Arc::new(Metrics::new());
    let mut r = rng(13);
    let mut users: Vec<(Client, TcpTransport)> = (0..3)
        .map(|_| {
            let mut t = TcpTransport::connect(net.local_addr()).unwrap().with_metrics(client_metrics.clone());
            (Client::register(&mut t, &mut r).unwrap(), t)
        })
        .collect();
    for (i, (c, t)) in users.iter_mut().enumerate() {
        c.submit(t, "P1", 0, i != 2, &mut r).unwrap();
    }
    srv.advance_to(srv.config().epsilon + 2);
    assert_eq!(srv.status("P1", 0), Status::Available);

    let (c, t) = &mut users[0];
    assert_eq!(c.claim(t, "P1", 0, &mut r).unwrap(), 1);
    let statuses = c.inquire(t, &["P1".to_string(), "P2".to_string()], &mut r).unwrap();
    assert_eq!(statuses, vec![Status::Unconfirmed, Status::Unconfirmed]);
    assert_eq!(c.balance(), 0);
    assert!(c.is_coherent());

    let (c, t) = &mut users[2];
    let err = c.claim(t, "P1", 0, &mut r).unwrap_err();
    assert_eq!(err.reason(), Some(Reason::NoCredit));
    assert!(matches!(err, ClientError::Rejected { stage: Stage::ClaimOpen, .. }));

    // framed byte counts agree on both ends
    drop(users);
    let client = client_metrics.snapshot();
    let server_side = server_metrics.snapshot();
    assert_eq!(client.keys().collect::<Vec<_>>(), server_side.keys().collect::<Vec<_>>());
    for (stage, c) in &client {
        let s = &server_side[stage];
        assert_eq!((c.calls, c.sent, c.received), (s.calls, s.received, s.sent), "{stage}");
    }
    net.shutdown();
}

#[test]
fn bad_frames_drop_the_connection_only() {
    let (_srv, _, net) = start(server(config()));

    let mut raw = TcpStream::connect(net.local_addr()).unwrap();
    raw.write_all(&[0, 0, 0, 50, b'v']).unwrap();
    raw.shutdown(std::net::Shutdown::Write).unwrap();
    let mut rest = Vec::new();
    raw.read_to_end(&mut rest).unwrap();
    assert!(rest.is_empty());

    let mut raw = TcpStream::connect(net.local_addr()).unwrap();
    raw.write_all(&(MAX_FRAME as u32 + 1).to_be_bytes()).unwrap();
    assert!(matches!(read_frame(&mut raw, MAX_FRAME), Err(FrameError::Closed)));

    let mut raw = TcpStream::connect(net.local_addr()).unwrap();
    write_frame(&mut raw, b"garbage", MAX_FRAME).unwrap();
    assert!(matches!(read_frame(&mut raw, MAX_FRAME), Err(FrameError::Closed)));

    // the server keeps serving
    let mut t = TcpTransport::connect(net.local_addr()).unwrap();
    assert!(matches!(t.call(Request::Setup).unwrap(), Response::Setup(_)));
}
