use std::collections::HashMap;
use std::sync::Mutex;

use texting_robots::Robot;
use url::Url;

use super::fetch::Fetcher;
use super::record::FetchStatus;

/// Per-origin robots.txt cache. A missing or unreadable robots.txt allows
/// everything.
pub struct RobotsCache {
    agent: String,
    rules: Mutex<HashMap<String, Option<Robot>>>,
}

impl RobotsCache {
    pub fn new(user_agent: &str) -> Self {
        // Product token only, e.g. "Mozilla" from a full UA string.
        let agent = user_agent
            .split(['/', ' '])
            .next()
            .filter(|s| !s.is_empty())
            .unwrap_or("*")
            .to_string();
        RobotsCache {
            agent,
            rules: Mutex::new(HashMap::new()),
        }
    }

    pub fn allowed(&self, url: &Url, fetcher: &Fetcher) -> bool {
        let key = url.origin().ascii_serialization();
        if let Some(entry) = self.rules.lock().unwrap().get(&key) {
            return entry.as_ref().is_none_or(|r| r.allowed(url.as_str()));
        }
        let robot = url.join("/robots.txt").ok().and_then(|robots_url| {
            let resp = fetcher.fetch(&robots_url);
            match (resp.status, resp.body) {
                (FetchStatus::Ok, Some(body)) => Robot::new(&self.agent, body.as_bytes()).ok(),
                _ => None,
            }
        });
        let allowed = robot.as_ref().is_none_or(|r| r.allowed(url.as_str()));
        self.rules.lock().unwrap().insert(key, robot);
        allowed
    }
}
