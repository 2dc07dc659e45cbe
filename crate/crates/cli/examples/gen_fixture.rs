//! Regenerates the bundled end-to-end fixture: two query logs, the page
//! table for the local archive server, a comparison corpus export, and a
//! ready-to-use config file. Everything is composed from fixed tables, so
//! rerunning this produces byte-identical files.
//!
//!     cargo run -p retrocorpus --example gen_fixture [out_dir]
//!
//! The corpus is built so the URL-augmented index strictly beats the
//! title-only index on the test split: twenty "hidden" navigational sites
//! carry their brand token only in the URL, while a review page mentioning
//! the brand in its title outranks them under title-only scoring.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use flate2::write::GzEncoder;
use flate2::Compression;
use retrocorpus_core::archive::assign_doc_id;
use retrocorpus_core::archive::mock::{write_pages_tsv, MockSnapshot, PageSpec};
use retrocorpus_core::extract::{write_export, ExportRow};
use retrocorpus_core::logs::{canonicalize_url, format_log_line, LogRecord, UrlUniverse};

const ONSETS: [&str; 10] =
    ["vel", "zor", "quin", "mar", "bex", "nor", "fal", "gri", "sol", "dra"];
const SUFFIXES: [&str; 4] = ["trix", "ana", "eon", "ium"];

const TOPICS: [&str; 29] = [
    "gardening",
    "recipes",
    "mortgage",
    "horoscope",
    "lyrics",
    "jewelry",
    "fishing",
    "knitting",
    "poker",
    "wallpaper",
    "aquarium",
    "camping",
    "genealogy",
    "crossword",
    "woodworking",
    "scrapbooking",
    "astronomy",
    "chess",
    "cycling",
    "pottery",
    "birdwatching",
    "coins",
    "stamps",
    "quilting",
    "barbecue",
    "telescope",
    "kayak",
    "bonsai",
    "candles",
];

// The first companion matches indexed title terms, so it retrieves
// candidates despite having no click and must be dropped as unjudged.
const COMPANIONS: [&str; 6] = [
    "customer reviews online",
    "driving directions",
    "white pages phone book",
    "area codes by state",
    "zip code lookup",
    "printable calendars",
];

/// Language code, host, title, body for the non-English pages. Three per
/// language, written to be comfortably classifiable at this length.
const FOREIGN: [(&str, &str, &str, &str); 24] = [
    ("de", "http://www.tagesmeldung.de",
     "Nachrichten aus Deutschland und der Welt",
     "Die aktuellen Meldungen des Tages mit ausführlichen Berichten über Politik, Wirtschaft und Sport. Unsere Redaktion schreibt jeden Morgen neue Artikel für unsere Leser in allen Bundesländern."),
    ("de", "http://www.rezeptkiste.de/index2.html",
     "Kochrezepte für die ganze Familie",
     "Einfache Rezepte zum Nachkochen mit frischen Zutaten aus der Region. Jede Woche veröffentlichen wir neue Vorschläge für das Abendessen, dazu Tipps für Kuchen und schnelle Gerichte."),
    ("de", "http://www.wetterblick.de/heute",
     "Wetterbericht und Vorhersage für morgen",
     "Das Wetter für morgen mit Temperaturen, Wind und Niederschlag für alle Regionen. Der Sommer bleibt zunächst warm und trocken, am Wochenende ziehen Gewitter über das Land."),
    ("es", "http://www.noticiario-digital.es",
     "Noticias y actualidad de España",
     "Toda la información del día con reportajes sobre política, economía y deportes. Nuestra redacción publica cada mañana artículos nuevos para los lectores de todas las comunidades españolas."),
    ("es", "http://www.cocinasencilla.es/index2.html",
     "Recetas de cocina para toda la familia",
     "Recetas fáciles con ingredientes frescos de temporada. Cada semana añadimos nuevos platos para la cena, además de consejos sobre postres y guisos rápidos para el verano español."),
    ("es", "http://www.eltiempomanana.es/hoy",
     "El tiempo y la predicción para mañana",
     "La predicción del tiempo para mañana con temperaturas, viento y lluvia en todas las provincias. El verano seguirá siendo caluroso y seco, aunque el fin de semana llegarán tormentas."),
    ("fr", "http://www.journaldujour.fr",
     "Les actualités du jour en France",
     "Toute l'information du jour avec des reportages sur la politique, l'économie et le sport. Notre rédaction publie chaque matin de nouveaux articles pour les lecteurs de toutes les régions françaises."),
    ("fr", "http://www.cuisinepratique.fr/index2.html",
     "Recettes de cuisine pour toute la famille",
     "Des recettes faciles avec des ingrédients frais de saison. Chaque semaine nous ajoutons de nouveaux plats pour le dîner, ainsi que des conseils pour les desserts et les petits déjeuners."),
    ("fr", "http://www.meteodemain.fr/aujourdhui",
     "La météo et les prévisions de demain",
     "Les prévisions pour demain avec les températures, le vent et la pluie dans tous les départements. L'été restera chaud et sec, mais des orages arriveront pendant le week-end."),
    ("it", "http://www.notiziario-oggi.it",
     "Notizie e attualità dall'Italia",
     "Tutte le informazioni della giornata con approfondimenti su politica, economia e sport. La nostra redazione pubblica ogni mattina nuovi articoli per i lettori di tutte le regioni italiane."),
    ("it", "http://www.cucinadicasa.it/index2.html",
     "Ricette di cucina per tutta la famiglia",
     "Ricette semplici con ingredienti freschi di stagione. Ogni settimana aggiungiamo nuovi piatti per la cena, oltre a consigli sui dolci e sui primi piatti veloci per l'estate."),
    ("it", "http://www.previsionidomani.it/oggi",
     "Le previsioni del tempo per domani",
     "Le previsioni per domani con temperature, vento e pioggia in tutte le province. L'estate resterà calda e asciutta, ma nel fine settimana arriveranno i temporali sulle regioni del nord."),
    ("ja", "http://www.mainichi-dayori.jp",
     "毎日の新しいニュースと話題",
     "政治や経済やスポーツについての記事を毎朝お届けします。編集部は全国の読者のために新しい記事を書いています。今日の話題と写真もあわせてご覧ください。"),
    ("ja", "http://www.ryouri-techou.jp/index2.html",
     "家族のための簡単な料理のレシピ",
     "新鮮な材料を使った簡単なレシピを紹介します。毎週新しい夕食の献立を追加しています。お菓子の作り方や朝ごはんのヒントもあります。"),
    ("ja", "http://www.ashita-tenki.jp/kyou",
     "明日の天気予報と気温の情報",
     "明日の天気予報です。各地の気温と風と雨の様子をお伝えします。夏は暑い日が続きますが、週末には雷雨の可能性があります。外出の前にご確認ください。"),
    ("nl", "http://www.nieuwsvandaag-online.nl",
     "Het laatste nieuws uit Nederland",
     "Al het nieuws van de dag met uitgebreide verslagen over politiek, economie en sport. Onze redactie schrijft elke ochtend nieuwe artikelen voor lezers in alle provincies van het land."),
    ("nl", "http://www.receptenboek-thuis.nl/index2.html",
     "Recepten voor het hele gezin",
     "Eenvoudige recepten met verse ingrediënten van het seizoen. Elke week voegen wij nieuwe gerechten toe voor het avondeten, met daarnaast tips voor taarten en snelle maaltijden."),
    ("nl", "http://www.weerbericht-morgen.nl/vandaag",
     "Het weerbericht en de verwachting voor morgen",
     "De verwachting voor morgen met temperaturen, wind en neerslag voor alle provincies. De zomer blijft voorlopig warm en droog, maar in het weekend trekken onweersbuien over het land."),
    ("pt", "http://www.noticias-da-manha.pt",
     "Notícias e atualidade de Portugal",
     "Toda a informação do dia com reportagens sobre política, economia e desporto. A nossa redação publica todas as manhãs novos artigos para os leitores de todas as regiões portuguesas."),
    ("pt", "http://www.receitas-caseiras.pt/index2.html",
     "Receitas caseiras para toda a família",
     "Receitas simples com ingredientes frescos da estação. Todas as semanas acrescentamos novos pratos para o jantar, além de sugestões de sobremesas e refeições rápidas para o verão."),
    ("pt", "http://www.previsao-amanha.pt/hoje",
     "A previsão do tempo para amanhã",
     "A previsão para amanhã com temperaturas, vento e chuva em todas as regiões do país. O verão continuará quente e seco, mas no fim de semana chegarão trovoadas ao litoral norte."),
    ("ru", "http://www.novosti-dnya.ru",
     "Новости дня и последние события",
     "Все новости дня с подробными репортажами о политике, экономике и спорте. Наша редакция каждое утро публикует новые статьи для читателей во всех регионах страны."),
    ("ru", "http://www.recepty-doma.ru/index2.html",
     "Рецепты домашней кухни для всей семьи",
     "Простые рецепты из свежих сезонных продуктов. Каждую неделю мы добавляем новые блюда для ужина, а также советы по выпечке и быстрым завтракам для всей семьи."),
    ("ru", "http://www.pogoda-zavtra.ru/segodnya",
     "Прогноз погоды на завтра",
     "Прогноз погоды на завтра с температурой, ветром и осадками для всех областей. Лето останется тёплым и сухим, но в выходные по стране пройдут грозы с сильным дождём."),
];

const DEAD_URLS: [&str; 6] = [
    "http://www.screensaver-palace.com",
    "http://www.grocery-door.com",
    "http://www.robots-blocked.com",
    "http://www.private-archive.net",
    "http://www.moved-portal.com",
    "http://www.gone-dotcom.com",
];

struct Doc {
    url: String,
    title: String,
    heading: String,
    body: String,
    content_type: &'static str,
    /// Hidden navigational pages omit the title element entirely.
    omit_title: bool,
}

const UTF8: &str = "text/html; charset=utf-8";
const LATIN: &str = "text/html; charset=windows-1252";
const BARE: &str = "text/html";

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

fn brands() -> Vec<String> {
    let mut out = Vec::new();
    for suffix in SUFFIXES {
        for onset in ONSETS {
            out.push(format!("{onset}{suffix}"));
        }
    }
    out
}

fn build_docs() -> Vec<Doc> {
    let brands = brands();
    let mut docs = Vec::new();

    // Hidden navigational sites: the brand appears in the URL and body but
    // never in the title, which is generic or missing.
    for (i, brand) in brands[..20].iter().enumerate() {
        let (title, omit_title) = match i % 4 {
            0 | 1 => (String::new(), true),
            2 => ("Welcome".to_string(), false),
            _ => ("Home Page".to_string(), false),
        };
        docs.push(Doc {
            url: format!("http://www.{brand}.com"),
            title,
            heading: capitalize(brand),
            body: format!(
                "Official site of {}. Products, support and store locations \
                 for customers across the United States.",
                capitalize(brand)
            ),
            content_type: UTF8,
            omit_title,
        });
    }

    // One review page per hidden brand. Its title mentions the brand, so it
    // is the only title-index match for the navigational query.
    for (i, brand) in brands[..20].iter().enumerate() {
        docs.push(Doc {
            url: format!("http://www.shopratings{}.com/item{}.html", i % 4, 100 + i),
            title: format!("{} customer reviews and complaints", capitalize(brand)),
            heading: format!("{} reviews", capitalize(brand)),
            body: format!(
                "Read independent reviews of {} from verified buyers. Ratings, \
                 complaints and general shopping advice collected this year.",
                capitalize(brand)
            ),
            content_type: UTF8,
            omit_title: false,
        });
    }

    // Visible navigational sites: brand in the title, so both index
    // variants resolve these queries.
    for (i, brand) in brands[20..40].iter().enumerate() {
        let title = if i % 2 == 0 {
            format!("{} - Official Site", capitalize(brand))
        } else {
            format!("{} Online", capitalize(brand))
        };
        docs.push(Doc {
            url: format!("http://www.{brand}.com"),
            title,
            heading: capitalize(brand),
            body: format!(
                "{} corporate home page with catalogs, customer service \
                 contacts and a dealer locator for every region.",
                capitalize(brand)
            ),
            content_type: if i % 7 == 3 { BARE } else { UTF8 },
            omit_title: false,
        });
    }

    // Topic sites, four pages per topic.
    for (ti, topic) in TOPICS.iter().enumerate() {
        let cap = capitalize(topic);
        let quads = [
            (
                format!("http://www.{topic}central.com"),
                format!("{cap} tips for beginners"),
                format!("{cap} tips"),
            ),
            (
                format!("http://www.{topic}guide.com/basics.html"),
                format!("The complete {topic} guide"),
                format!("{cap} basics"),
            ),
            (
                format!("http://{topic}world.net/p2.html"),
                format!("{cap} ideas and projects"),
                format!("{cap} projects"),
            ),
            (
                format!("http://members.webhive.net/{topic}fans"),
                format!("Learn {topic} online"),
                format!("Learning {topic}"),
            ),
        ];
        for (j, (url, title, heading)) in quads.into_iter().enumerate() {
            let mut title = title;
            let mut body = format!(
                "{cap} resources, articles and practical advice. Our editors \
                 update the {topic} pages every week with notes from readers \
                 and answers to common questions."
            );
            let mut content_type = UTF8;
            if *topic == "jewelry" && j == 0 {
                title = format!("Smith & Sons {topic} tips for beginners");
            }
            if *topic == "fishing" && j == 1 {
                body = format!(
                    "Rivière {topic} spots with café stops along the route. \
                     Our editors update the {topic} pages every week with \
                     notes from touring anglers."
                );
                content_type = LATIN;
            }
            if ti % 9 == 4 && j == 2 {
                content_type = BARE;
            }
            docs.push(Doc { url, title, heading, body, content_type, omit_title: false });
        }
    }

    for (lang, url, title, body) in FOREIGN {
        docs.push(Doc {
            url: url.to_string(),
            title: title.to_string(),
            heading: title.to_string(),
            // The German weather page goes out as windows-1252 to exercise
            // charset-hinted decoding on a non-default encoding.
            body: body.to_string(),
            content_type: if url.contains("wetterblick") { LATIN } else { UTF8 },
            omit_title: lang.is_empty(),
        });
    }

    docs
}

fn escape_html(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render(doc: &Doc, idx: usize, stale: bool) -> String {
    let title = escape_html(&doc.title);
    let heading = escape_html(&doc.heading);
    let mut body = escape_html(&doc.body);
    if stale {
        body.push_str(" Earlier capture of this page.");
    }
    let head = if doc.omit_title { String::new() } else { format!("<title>{title}</title>") };
    match idx % 4 {
        0 => format!(
            "<html><head>{head}<style>h1 {{ color: navy }}</style></head>\
             <body><h1>{heading}</h1><p>{body}</p></body></html>"
        ),
        1 => format!(
            "<html><head>{head}<script>var visits = 1;</script></head>\
             <body><!-- banner --><h1>{heading}</h1><p>{body}</p>\
             <p>Copyright 2006.</p></body></html>"
        ),
        2 => format!(
            "<html><head>{head}</head><body><div id=\"main\"><h1>{heading}</h1>\
             <br><p>{body}&nbsp;</p></div></body></html>"
        ),
        _ => {
            let upper = head.replace("<title>", "<TITLE>").replace("</title>", "</TITLE>");
            format!(
                "<HTML><HEAD>{upper}</HEAD><BODY><H1>{heading}</H1>\
                 <P>{body}</P></BODY></HTML>"
            )
        }
    }
}

fn snap(ts: &str, status: u16, available: bool, ct: &str, body: String) -> MockSnapshot {
    MockSnapshot {
        timestamp: ts.to_string(),
        status,
        available,
        content_type: ct.to_string(),
        body,
    }
}

fn build_pages(docs: &[Doc]) -> Vec<PageSpec> {
    let mut pages = Vec::new();
    for (idx, doc) in docs.iter().enumerate() {
        let fresh = render(doc, idx, false);
        let stale = render(doc, idx, true);
        let ct = doc.content_type;
        // The capture nearest 2006-03-01 always carries the fresh body, so a
        // wrong pick shows up as a content diff downstream.
        let mut snaps = match idx % 5 {
            0 => vec![snap("20060220120000", 200, true, ct, fresh)],
            1 => vec![
                snap("20060115000000", 200, true, ct, stale),
                snap("20060310060000", 200, true, ct, fresh),
            ],
            2 => vec![
                snap("20051201000000", 200, true, ct, stale.clone()),
                snap("20060228235959", 200, true, ct, fresh),
                snap("20060615000000", 200, true, ct, stale),
            ],
            // Equidistant pair: the earlier capture must win the tie.
            3 => vec![
                snap("20060226000000", 200, true, ct, fresh),
                snap("20060304000000", 200, true, ct, stale),
            ],
            _ => vec![snap("20040801000000", 200, true, ct, fresh)],
        };
        if idx % 17 == 0 {
            snaps.push(snap("20080101000000", 404, false, "text/html", "gone".to_string()));
        }
        pages.push(PageSpec { url: doc.url.clone(), snapshots: snaps });
    }

    // Four of the six dead URLs have captures, none usable. The other two
    // are absent from the table entirely.
    pages.push(PageSpec {
        url: DEAD_URLS[2].to_string(),
        snapshots: vec![snap("20060225000000", 200, false, BARE, "blocked".to_string())],
    });
    pages.push(PageSpec {
        url: DEAD_URLS[3].to_string(),
        snapshots: vec![snap("20060301000000", 200, false, BARE, "private".to_string())],
    });
    pages.push(PageSpec {
        url: DEAD_URLS[4].to_string(),
        snapshots: vec![snap("20060228000000", 302, true, BARE, "moved".to_string())],
    });
    pages.push(PageSpec {
        url: DEAD_URLS[5].to_string(),
        snapshots: vec![snap("20060301060000", 404, true, BARE, "gone".to_string())],
    });
    pages
}

fn rec(user: u32, query: &str, time: &str, click: Option<(u32, &str)>) -> LogRecord {
    let query_time = chrono::NaiveDateTime::parse_from_str(time, "%Y-%m-%d %H:%M:%S")
        .unwrap_or_else(|_| panic!("bad fixture timestamp {time:?}"));
    let (item_rank, click_url) = match click {
        Some((rank, url)) => (Some(rank), Some(url.to_string())),
        None => (None, None),
    };
    LogRecord { user_id: user.to_string(), query_text: query.to_string(), query_time, item_rank, click_url }
}

fn march_day(base: u32, step: usize, modulo: u32) -> u32 {
    base + (step as u32 % modulo)
}

/// Training and dev traffic for log-a. Returns the records plus the count of
/// valid records, so junk lines can be spliced in afterwards.
fn build_log_a(docs: &[Doc]) -> Vec<LogRecord> {
    let brands = brands();
    let topic_doc = |ti: usize, j: usize| -> &str { &docs[60 + ti * 4 + j].url };
    let mut records = Vec::new();

    for (ti, topic) in TOPICS.iter().enumerate() {
        let user = 100001 + (ti as u32 % 10);
        let day = march_day(2, ti, 26);
        let minute = (ti * 2) % 50;
        let stamp = |m: usize| format!("2006-03-{day:02} 09:{m:02}:00");
        // The first gardening click arrives with a trailing slash to check
        // raw string canonicalization; a later one repeats the exact query.
        let tips_url = if ti == 0 {
            format!("{}/", topic_doc(ti, 0))
        } else {
            topic_doc(ti, 0).to_string()
        };
        records.push(rec(user, &format!("{topic} tips"), &stamp(minute), Some((1, &tips_url))));
        records.push(rec(
            user,
            &format!("{topic} guide"),
            &stamp(minute + 3),
            Some((2, topic_doc(ti, 1))),
        ));
        records.push(rec(
            user,
            &format!("{topic} ideas"),
            &stamp(minute + 7),
            Some((3, topic_doc(ti, 2))),
        ));

        let user2 = 100002 + ((ti as u32 + 3) % 10);
        let day2 = march_day(3, ti * 2, 25);
        let stamp2 = |m: usize| format!("2006-03-{day2:02} 14:{m:02}:30");
        records.push(rec(user2, &format!("learn {topic}"), &stamp2(minute), Some((1, topic_doc(ti, 3)))));
        records.push(rec(user2, &format!("{topic} message boards"), &stamp2(minute + 5), None));
    }

    // Review pages, two clicks per session.
    for i in (0..20).step_by(2) {
        let user = 100005 + (i as u32 % 6);
        let day = march_day(5, i, 20);
        let stamp = |m: usize| format!("2006-03-{day:02} 19:{m:02}:00");
        records.push(rec(
            user,
            &format!("read {} reviews", brands[i]),
            &stamp(10),
            Some((4, &docs[20 + i].url)),
        ));
        records.push(rec(
            user,
            &format!("{} reviews", brands[i + 1]),
            &stamp(14),
            Some((6, &docs[20 + i + 1].url)),
        ));
    }

    // Foreign-language sites, one session per language.
    let foreign_queries = [
        ("nachrichten deutschland", "kochrezepte", "wetterbericht morgen"),
        ("noticias espana", "recetas de cocina", "el tiempo manana"),
        ("actualites france", "recettes cuisine", "meteo demain"),
        ("notizie italia", "ricette cucina", "previsioni tempo"),
        ("japan news site", "japanese recipes", "tokyo weather"),
        ("nieuws nederland", "recepten", "weerbericht morgen"),
        ("noticias portugal", "receitas caseiras", "previsao tempo"),
        ("russia novosti", "recepty doma", "pogoda zavtra"),
    ];
    for (li, (q1, q2, q3)) in foreign_queries.iter().enumerate() {
        let user = 100003 + (li as u32 % 8);
        let day = march_day(9, li * 3, 19);
        let stamp = |m: usize| format!("2006-03-{day:02} 21:{m:02}:00");
        let base = 176 + li * 3;
        records.push(rec(user, q1, &stamp(0), Some((1, &docs[base].url))));
        records.push(rec(user, q2, &stamp(6), Some((2, &docs[base + 1].url))));
        records.push(rec(user, q3, &stamp(13), Some((3, &docs[base + 2].url))));
    }

    // Sites that no longer resolve in the archive.
    for (i, pair) in DEAD_URLS.chunks(2).enumerate() {
        let user = 100008 + i as u32;
        let day = 11 + 2 * i as u32;
        let stamp = |m: usize| format!("2006-03-{day:02} 22:{m:02}:00");
        records.push(rec(user, "free screensavers download", &stamp(1), Some((7, pair[0]))));
        records.push(rec(user, "online grocery delivery", &stamp(8), Some((9, pair[1]))));
    }

    // Same query issued twice at the same second with two different clicks.
    records.push(rec(100011, "gardening tips", "2006-03-18 10:15:00", Some((2, topic_doc(0, 0)))));
    records.push(rec(100011, "gardening tips", "2006-03-18 10:15:00", Some((5, topic_doc(0, 2)))));

    // Gap handling: 29m59s stays in one session, then a lone query after
    // a 30m01s pause gets segmented off and later discarded as too short.
    records.push(rec(100012, "crossword puzzles", "2006-03-20 10:00:00", Some((1, topic_doc(13, 0)))));
    records.push(rec(100012, "crossword answers", "2006-03-20 10:29:59", None));
    records.push(rec(100012, "crossword dictionary", "2006-03-20 11:00:00", None));

    // Clicks whose URL cannot be parsed; the queries still count.
    records.push(rec(100007, "old site bookmarks", "2006-03-08 09:00:00", Some((1, "www.oldsite-noscheme.com"))));
    records.push(rec(100007, "broken shortcut", "2006-03-08 09:02:00", Some((2, "http://"))));

    // Uppercase scheme and host plus a fragment, collapsing to a known URL.
    records.push(rec(100010, "veltrix", "2006-03-22 13:00:00", Some((1, "HTTP://WWW.VELTRIX.COM/#top"))));
    records.push(rec(100010, "veltrix stores", "2006-03-22 13:04:00", None));

    // Dev-window sessions, including both sides of the April 1 boundary.
    records.push(rec(100001, "april fools jokes", "2006-04-01 00:00:00", None));
    records.push(rec(100001, "recipes guide", "2006-04-01 00:02:00", Some((1, topic_doc(1, 1)))));
    records.push(rec(100002, "mortgage tips", "2006-03-31 23:50:00", Some((1, topic_doc(2, 0)))));
    records.push(rec(100002, "mortgage ideas", "2006-04-01 00:05:00", Some((2, topic_doc(2, 2)))));
    for k in 0..3usize {
        let user = 100004 + k as u32;
        let day = 3 + 4 * k as u32;
        let ti = 3 + k;
        let stamp = |m: usize| format!("2006-04-{day:02} 16:{m:02}:00");
        records.push(rec(user, &format!("{} tips", TOPICS[ti]), &stamp(20), Some((1, topic_doc(ti, 0)))));
        records.push(rec(user, &format!("{} guide", TOPICS[ti]), &stamp(26), Some((3, topic_doc(ti, 1)))));
    }

    records
}

/// Test-window traffic for log-b: the navigational sessions the evaluation
/// is built around, plus topical sessions for contrast.
fn build_log_b(docs: &[Doc]) -> Vec<LogRecord> {
    let brands = brands();
    let topic_doc = |ti: usize, j: usize| -> &str { &docs[60 + ti * 4 + j].url };
    let start = chrono::NaiveDate::from_ymd_opt(2006, 4, 16).expect("fixture date");
    let mut records = Vec::new();

    for (i, brand) in brands[..20].iter().enumerate() {
        let user = 100013 + (i as u32 % 18);
        let date = start + chrono::TimeDelta::days(i as i64 % 44);
        let stamp = |m: usize| format!("{} 19:{m:02}:00", date.format("%Y-%m-%d"));
        let minute = (i * 7) % 50;
        records.push(rec(user, brand, &stamp(minute), Some((1, &docs[i].url))));
        records.push(rec(user, COMPANIONS[i % 6], &stamp(minute + 4), None));
    }

    for (i, brand) in brands[20..40].iter().enumerate() {
        let user = 100013 + ((i as u32 + 7) % 18);
        let date = chrono::NaiveDate::from_ymd_opt(2006, 4, 20).expect("fixture date")
            + chrono::TimeDelta::days(i as i64);
        let stamp = |m: usize| format!("{} 20:{m:02}:00", date.format("%Y-%m-%d"));
        let minute = (i * 3) % 40;
        records.push(rec(user, brand, &stamp(minute), Some((1, &docs[40 + i].url))));
        if i % 3 == 0 {
            records.push(rec(
                user,
                &format!("{brand} official site"),
                &stamp(minute + 5),
                Some((1, &docs[40 + i].url)),
            ));
        } else {
            records.push(rec(user, COMPANIONS[(i + 2) % 6], &stamp(minute + 5), None));
        }
    }

    for ti in 0..15usize {
        let user = 100013 + ((ti as u32 * 5 + 3) % 18);
        let date = chrono::NaiveDate::from_ymd_opt(2006, 4, 17).expect("fixture date")
            + chrono::TimeDelta::days(2 * ti as i64);
        let stamp = |m: usize| format!("{} 21:{m:02}:00", date.format("%Y-%m-%d"));
        let minute = (ti * 2) % 30;
        records.push(rec(user, &format!("{} tips", TOPICS[ti]), &stamp(minute), Some((1, topic_doc(ti, 0)))));
        records.push(rec(user, &format!("{} guide", TOPICS[ti]), &stamp(minute + 6), Some((2, topic_doc(ti, 1)))));
    }

    records
}

fn sort_records(records: &mut [LogRecord]) {
    records.sort_by(|a, b| {
        let ka = a.user_id.parse::<u64>().unwrap_or(0);
        let kb = b.user_id.parse::<u64>().unwrap_or(0);
        ka.cmp(&kb).then(a.query_time.cmp(&b.query_time))
    });
}

const HEADER: &str = "AnonID\tQuery\tQueryTime\tItemRank\tClickURL";

/// Lines that must fail to parse, spliced into log-a at fixed offsets.
const JUNK: [(usize, &str); 7] = [
    (10, ""),
    (25, "this line has no tabs at all"),
    (40, "100003\tbroken row\t2006-03-05 10:00:00\t7"),
    (55, "100004\tbad time\t2006/03/05\t\t"),
    (70, "100005\tzero rank\t2006-03-06 11:00:00\t0\thttp://www.rankzero.com/"),
    (85, "100006\thalf click\t2006-03-07 12:00:00\t3\t"),
    (100, "100006\tno click fields\t2006-03-07 12:05:00\t\t"),
];

fn write_log_a(path: &PathBuf, records: &[LogRecord]) -> std::io::Result<()> {
    let mut lines = vec![HEADER.to_string()];
    for (i, record) in records.iter().enumerate() {
        for (at, junk) in JUNK {
            if at == i {
                lines.push(junk.to_string());
            }
        }
        let mut line = format_log_line(record);
        if i == 3 {
            line.push('\r');
        }
        lines.push(line);
    }
    let mut out = BufWriter::new(File::create(path)?);
    for line in lines {
        writeln!(out, "{line}")?;
    }
    out.flush()
}

fn write_log_b(path: &PathBuf, records: &[LogRecord]) -> std::io::Result<()> {
    let file = File::create(path)?;
    let mut out = GzEncoder::new(BufWriter::new(file), Compression::default());
    writeln!(out, "{HEADER}")?;
    for record in records {
        writeln!(out, "{}", format_log_line(record))?;
    }
    out.finish()?.flush()
}

/// The comparison corpus: visible navigation and topic and foreign pages
/// shared with the current build (some retitled), two empty-title pages,
/// and six documents the current corpus lacks.
fn build_other_corpus(docs: &[Doc]) -> Vec<ExportRow> {
    let mut rows = Vec::new();
    let row = |doc: &Doc, title: String| ExportRow {
        doc_id: assign_doc_id(&doc.url),
        title,
        url: doc.url.clone(),
    };
    rows.push(row(&docs[0], String::new()));
    rows.push(row(&docs[1], String::new()));
    for doc in &docs[40..60] {
        rows.push(row(doc, doc.title.clone()));
    }
    for (i, doc) in docs[60..176].iter().enumerate() {
        let title = match i % 10 {
            0 => format!("Archived copy of record {i}"),
            1 => format!("{} updated 2007", doc.title),
            2 => {
                let mut words: Vec<&str> = doc.title.split(' ').collect();
                words.pop();
                words.join(" ")
            }
            _ => doc.title.clone(),
        };
        rows.push(row(doc, title));
    }
    for doc in &docs[176..200] {
        rows.push(row(doc, doc.title.clone()));
    }
    for i in 0..6 {
        let url = format!("http://www.retired-site{i}.com");
        rows.push(ExportRow {
            doc_id: assign_doc_id(&url),
            title: format!("Retired site number {i}"),
            url,
        });
    }
    rows.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    rows
}

const CONF: &str = "\
# Bundled fixture configuration. Paths are relative to this file.
workdir = work
logs = log-a.tsv, log-b.tsv.gz

# Point the toolkit at a local archive server when working offline:
#   retrocorpus serve-archive --config fixture.conf
# then export RETROCORPUS_ARCHIVE_ENDPOINT or pass --mock-endpoint.
archive_pages = pages.tsv
target_timestamp = 20060301000000

# The local server needs no politeness, so keep the pacing tight.
min_request_interval_ms = 2
backoff_base_ms = 5
max_retries = 3
request_timeout_ms = 5000
max_concurrency = 4

gap_minutes = 30
min_queries = 2
train_start = 2006-03-01
train_end = 2006-04-01
dev_start = 2006-04-01
dev_end = 2006-04-15
test_start = 2006-04-15
test_end = 2006-06-01
eval_split = test

candidate_k = 50
seed = 42

diff_other = other-corpus.tsv
diff_label_a = current
diff_label_b = rebuilt-2007
";

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixture".to_string()));
    fs::create_dir_all(&out).expect("create fixture dir");

    let docs = build_docs();
    assert_eq!(docs.len(), 200, "document table size changed");
    let mut ids = BTreeSet::new();
    for doc in &docs {
        assert_eq!(canonicalize_url(&doc.url).unwrap(), doc.url, "{} not canonical", doc.url);
        assert!(ids.insert(assign_doc_id(&doc.url)), "doc id collision for {}", doc.url);
    }

    let pages = build_pages(&docs);
    let file = File::create(out.join("pages.tsv")).expect("pages.tsv");
    write_pages_tsv(BufWriter::new(file), &pages).expect("write pages.tsv");

    let mut log_a = build_log_a(&docs);
    sort_records(&mut log_a);
    let mut log_b = build_log_b(&docs);
    sort_records(&mut log_b);
    write_log_a(&out.join("log-a.tsv"), &log_a).expect("write log-a.tsv");
    write_log_b(&out.join("log-b.tsv.gz"), &log_b).expect("write log-b.tsv.gz");

    // Every document URL must be clicked somewhere, and the clicked URL
    // universe must come out at exactly 200 resolvable sites plus 6 dead.
    let mut universe = UrlUniverse::new();
    for record in log_a.iter().chain(&log_b) {
        let _ = universe.add_record(record);
    }
    let clicked: BTreeSet<&str> = universe.urls().collect();
    for doc in &docs {
        assert!(clicked.contains(doc.url.as_str()), "{} never clicked", doc.url);
    }
    for dead in DEAD_URLS {
        assert!(clicked.contains(dead), "{dead} never clicked");
    }
    assert_eq!(clicked.len(), 206, "clicked URL universe drifted");

    let rows = build_other_corpus(&docs);
    let file = File::create(out.join("other-corpus.tsv")).expect("other-corpus.tsv");
    write_export(BufWriter::new(file), rows).expect("write other-corpus.tsv");

    fs::write(out.join("fixture.conf"), CONF).expect("write fixture.conf");

    println!(
        "wrote fixture to {}: {} docs, {} log-a records, {} log-b records",
        out.display(),
        docs.len(),
        log_a.len(),
        log_b.len()
    );
}
