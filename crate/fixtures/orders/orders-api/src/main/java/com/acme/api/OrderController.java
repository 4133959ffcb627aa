package com.acme.api;

import org.springframework.kafka.core.KafkaTemplate;
import org.springframework.web.bind.annotation.PostMapping;
import org.springframework.web.bind.annotation.RequestBody;
import org.springframework.web.bind.annotation.RestController;

/**
 * Accepts new orders over HTTP and hands them to the processing queue.
 */
@RestController
public class OrderController {
    private final KafkaTemplate<String, OrderDTO> template;

    public OrderController(KafkaTemplate<String, OrderDTO> template) {
        this.template = template;
    }

    @PostMapping("/orders")
    public String createOrder(@RequestBody OrderDTO order) {
        template.send("orders", order.getId(), order);
        return "OK";
    }
}
